//! Annotation CSV: `frame,labels,annotator`, labels `;`-separated class names.
//! The header line is optional on input and always written on output.

use std::collections::BTreeSet;

use super::ClassTaxonomy;
use crate::error::{Error, Result};

pub const ANNOTATION_HEADER: &str = "frame,labels,annotator";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedFrame {
    pub frame_index: u64,
    pub labels: BTreeSet<usize>,
    pub annotator_id: String,
}

impl AnnotatedFrame {
    /// Lowest-index label; used wherever a single label per frame is required.
    pub fn primary_label(&self) -> usize {
        *self.labels.first().expect("annotated frame without labels")
    }
}

pub fn parse_annotations(text: &str, taxonomy: &ClassTaxonomy) -> Result<Vec<AnnotatedFrame>> {
    let mut out = Vec::new();
    let mut row = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (i == 0 && line.trim() == ANNOTATION_HEADER) {
            continue;
        }
        row += 1;
        let fields: Vec<&str> = line.splitn(3, ',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::format(row, "expected `frame,labels,annotator`"));
        }
        let frame_index: u64 = fields[0]
            .parse()
            .map_err(|_| Error::format(row, format!("malformed frame {:?}", fields[0])))?;
        let mut labels = BTreeSet::new();
        for name in fields[1].split(';').map(str::trim).filter(|n| !n.is_empty()) {
            let idx = taxonomy.index_of(name).ok_or_else(|| Error::Taxonomy {
                row,
                name: name.to_string(),
            })?;
            labels.insert(idx);
        }
        if labels.is_empty() {
            return Err(Error::EmptyLabels { row });
        }
        out.push(AnnotatedFrame {
            frame_index,
            labels,
            annotator_id: fields[2].to_string(),
        });
    }
    Ok(out)
}

pub fn write_annotations(frames: &[AnnotatedFrame], taxonomy: &ClassTaxonomy) -> String {
    let mut out = String::from(ANNOTATION_HEADER);
    out.push('\n');
    for f in frames {
        let names: Vec<&str> = f
            .labels
            .iter()
            .map(|&i| taxonomy.name(i).expect("label index outside taxonomy"))
            .collect();
        out.push_str(&format!("{},{},{}\n", f.frame_index, names.join(";"), f.annotator_id));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_label_row() {
        let t = ClassTaxonomy::default();
        let a = parse_annotations("0,Infant,ann1", &t).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].frame_index, 0);
        assert_eq!(a[0].labels, BTreeSet::from([0]));
        assert_eq!(a[0].annotator_id, "ann1");
    }

    #[test]
    fn multi_label_row() {
        let t = ClassTaxonomy::default();
        let a = parse_annotations("frame,labels,annotator\n1,Infant;Airway Provider,ann1\n", &t)
            .unwrap();
        assert_eq!(a[0].labels, BTreeSet::from([0, 4]));
        assert_eq!(a[0].primary_label(), 0);
    }

    #[test]
    fn unknown_and_empty_labels() {
        let t = ClassTaxonomy::default();
        assert!(matches!(
            parse_annotations("2,Robot,ann1", &t),
            Err(Error::Taxonomy { row: 1, ref name }) if name == "Robot"
        ));
        assert!(matches!(
            parse_annotations("0,Infant,a\n3,,ann1", &t),
            Err(Error::EmptyLabels { row: 2 })
        ));
    }

    #[test]
    fn writes_normalized_form() {
        let t = ClassTaxonomy::default();
        let a = parse_annotations("1, Airway Provider ;Infant ,ann1", &t).unwrap();
        assert_eq!(
            write_annotations(&a, &t),
            "frame,labels,annotator\n1,Infant;Airway Provider,ann1\n"
        );
    }
}
