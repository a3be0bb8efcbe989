use serde::{Deserialize, Serialize};

use crate::detection::region_descriptor;
use crate::error::{FanError, Result};
use crate::providers::scene::Scene;
use crate::types::{DescriptorField, Mask, QueryDescriptor, QueryKind};

/// Query built from the descriptor under a clicked pixel.
pub fn query_from_click(
    field: &DescriptorField,
    x: usize,
    y: usize,
    label: impl Into<String>,
) -> Result<QueryDescriptor> {
    if x >= field.width() || y >= field.height() {
        return Err(FanError::Range(format!(
            "click ({x}, {y}) outside {}x{} field",
            field.width(),
            field.height()
        )));
    }
    QueryDescriptor::new(label, field.pixel(x, y).to_vec(), QueryKind::Click)
}

/// Query built from the mean descriptor under `mask`.
pub fn query_from_region(
    field: &DescriptorField,
    mask: &Mask,
    label: impl Into<String>,
) -> Result<QueryDescriptor> {
    let v = region_descriptor(field, mask)?;
    QueryDescriptor::new(label, v, QueryKind::Region)
}

/// One entry of a JSON query file.
///
/// ```json
/// [{"label": "car", "vector": [0.1, 0.2]},
///  {"label": "ground", "class": 0},
///  {"label": "tunnel", "click": [12, 40]}]
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum QuerySpec {
    Vector { label: String, vector: Vec<f32> },
    Class { label: String, class: u32 },
    Click { label: String, click: [usize; 2] },
}

impl QuerySpec {
    pub fn label(&self) -> &str {
        match self {
            QuerySpec::Vector { label, .. }
            | QuerySpec::Class { label, .. }
            | QuerySpec::Click { label, .. } => label,
        }
    }

    /// Resolves against the frame being queried and, for class entries, the
    /// synthetic scene that owns the class base vectors.
    pub fn resolve(&self, field: &DescriptorField, scene: Option<&Scene>) -> Result<QueryDescriptor> {
        match self {
            QuerySpec::Vector { label, vector } => {
                if vector.len() != field.dim() {
                    return Err(FanError::Dimension {
                        expected: field.dim(),
                        got: vector.len(),
                    });
                }
                QueryDescriptor::new(label.clone(), vector.clone(), QueryKind::Precomputed)
            }
            QuerySpec::Class { label, class } => {
                let scene = scene.ok_or_else(|| {
                    FanError::Config(format!("query '{label}' names a class but no scene is loaded"))
                })?;
                let base = scene
                    .base(*class)
                    .ok_or_else(|| FanError::Config(format!("unknown class {class}")))?;
                QueryDescriptor::new(label.clone(), base.to_vec(), QueryKind::Precomputed)
            }
            QuerySpec::Click { label, click } => query_from_click(field, click[0], click[1], label.clone()),
        }
    }
}

pub fn load_query_specs(path: impl AsRef<std::path::Path>) -> Result<Vec<QuerySpec>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> DescriptorField {
        // 3x3 field, d=2, pixel (x,y) = [x + 3y, 1]
        let mut data = Vec::new();
        for y in 0..3 {
            for x in 0..3 {
                data.push((x + 3 * y) as f32);
                data.push(1.0);
            }
        }
        DescriptorField::new(3, 3, 2, data).unwrap()
    }

    #[test]
    fn click_indexes_field() {
        let f = grid();
        assert_eq!(query_from_click(&f, 0, 0, "a").unwrap().vector, vec![0.0, 1.0]);
        assert_eq!(query_from_click(&f, 2, 1, "a").unwrap().vector, vec![5.0, 1.0]);
        assert_eq!(query_from_click(&f, 0, 0, "a").unwrap().kind, QueryKind::Click);
        assert!(matches!(query_from_click(&f, 3, 0, "a"), Err(FanError::Range(_))));
    }

    #[test]
    fn singleton_region_equals_click() {
        let f = grid();
        let m = Mask::from_rect(3, 3, 1, 2, 1, 1);
        assert_eq!(
            query_from_region(&f, &m, "a").unwrap().vector,
            query_from_click(&f, 1, 2, "a").unwrap().vector
        );
    }

    #[test]
    fn region_mean_matches_scalar_loop() {
        let f = grid();
        let m = Mask::from_values(3, 3, vec![1, 1, 0, 0, 1, 0, 0, 0, 1]).unwrap();
        let mut sum = [0.0f64; 2];
        let mut n = 0.0;
        for y in 0..3 {
            for x in 0..3 {
                if m.get(x, y) {
                    sum[0] += f.pixel(x, y)[0] as f64;
                    sum[1] += f.pixel(x, y)[1] as f64;
                    n += 1.0;
                }
            }
        }
        // (0 + 1 + 4 + 8) / 4 = 3.25
        assert_eq!(sum[0] / n, 3.25);
        let q = query_from_region(&f, &m, "a").unwrap();
        assert_eq!(q.vector, vec![(sum[0] / n) as f32, (sum[1] / n) as f32]);
        assert_eq!(q.kind, QueryKind::Region);
    }

    #[test]
    fn uniform_region_mean() {
        let f = DescriptorField::uniform(4, 4, &[0.25, -1.0, 3.0]).unwrap();
        let q = query_from_region(&f, &Mask::from_rect(4, 4, 1, 1, 3, 2), "u").unwrap();
        assert_eq!(q.vector, vec![0.25, -1.0, 3.0]);
    }

    #[test]
    fn empty_region_errors() {
        assert!(matches!(
            query_from_region(&grid(), &Mask::empty(3, 3), "a"),
            Err(FanError::EmptyRegion)
        ));
    }

    #[test]
    fn query_specs_parse() {
        let specs: Vec<QuerySpec> = serde_json::from_str(
            r#"[{"label":"car","vector":[0.5,1.0]},{"label":"g","class":0},{"label":"c","click":[1,2]}]"#,
        )
        .unwrap();
        assert!(matches!(specs[0], QuerySpec::Vector { .. }));
        assert!(matches!(specs[1], QuerySpec::Class { class: 0, .. }));
        let q = specs[2].resolve(&grid(), None).unwrap();
        assert_eq!(q.vector, vec![7.0, 1.0]);
        assert!(specs[1].resolve(&grid(), None).is_err());
    }
}
