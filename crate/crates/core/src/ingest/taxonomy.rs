use crate::error::{Error, Result};

/// Gaze-target classes used when no taxonomy file is given.
pub const DEFAULT_CLASSES: [&str; 7] = [
    "Infant",
    "Vitals Monitor",
    "Video Laryngoscope Screen",
    "Airway Equipment",
    "Airway Provider",
    "Non-Team Member",
    "Other Physical Objects",
];

/// Ordered class names. The position of a name is its score index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTaxonomy {
    labels: Vec<String>,
}

impl Default for ClassTaxonomy {
    fn default() -> Self {
        Self {
            labels: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ClassTaxonomy {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::EmptyInput("taxonomy has no classes"));
        }
        for (i, name) in labels.iter().enumerate() {
            if name.is_empty() || name.contains([',', ';', '\n']) {
                return Err(Error::InvalidInput(format!("invalid class name {name:?}")));
            }
            if labels[..i].contains(name) {
                return Err(Error::InvalidInput(format!("duplicate class name {name:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// One class name per non-empty line.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.labels {
            out.push_str(l);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_has_seven_classes_in_order() {
        let t = ClassTaxonomy::default();
        assert_eq!(t.len(), 7);
        assert_eq!(t.index_of("Infant"), Some(0));
        assert_eq!(t.index_of("Other Physical Objects"), Some(6));
        assert_eq!(t.index_of("Robot"), None);
    }

    #[test]
    fn rejects_duplicates() {
        assert!(ClassTaxonomy::new(["a", "b", "a"]).is_err());
        assert!(ClassTaxonomy::parse("\n\n").is_err());
    }

    #[test]
    fn text_round_trip() {
        let t = ClassTaxonomy::default();
        assert_eq!(ClassTaxonomy::parse(&t.to_text()).unwrap(), t);
    }
}
