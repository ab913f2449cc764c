//! Keyword matrix: the Cartesian product of platform × device class × speed.

use serde::{Deserialize, Serialize};

use super::IngestError;

pub const DEFAULT_WINDOW_START: i32 = 2018;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KeywordTuple {
    pub platform: String,
    pub device_class: String,
    pub speed_marker: String,
    /// Inclusive publication-year window; an open end means "to present".
    pub window: (i32, Option<i32>),
}

impl KeywordTuple {
    pub fn in_window(&self, year: i32) -> bool {
        year >= self.window.0 && self.window.1.is_none_or(|end| year <= end)
    }

    pub fn query(&self) -> String {
        format!("{} {} {}", self.platform, self.device_class, self.speed_marker)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordAxes {
    pub platforms: Vec<String>,
    pub devices: Vec<String>,
    pub speeds: Vec<String>,
    #[serde(default = "default_window")]
    pub window: (i32, Option<i32>),
}

fn default_window() -> (i32, Option<i32>) {
    (DEFAULT_WINDOW_START, None)
}

impl KeywordAxes {
    pub fn new<S: Into<String>>(
        platforms: impl IntoIterator<Item = S>,
        devices: impl IntoIterator<Item = S>,
        speeds: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            platforms: platforms.into_iter().map(Into::into).collect(),
            devices: devices.into_iter().map(Into::into).collect(),
            speeds: speeds.into_iter().map(Into::into).collect(),
            window: default_window(),
        }
    }
}

fn canonical_axis(name: &str, values: &[String]) -> Result<Vec<String>, IngestError> {
    let mut v: Vec<String> = values
        .iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    v.sort();
    v.dedup();
    if v.is_empty() {
        return Err(IngestError::Config(format!("keyword axis {name:?} is empty")));
    }
    Ok(v)
}

/// All keyword tuples, in lexicographic (platform, device, speed) order.
pub fn expand_matrix(axes: &KeywordAxes) -> Result<Vec<KeywordTuple>, IngestError> {
    let platforms = canonical_axis("platforms", &axes.platforms)?;
    let devices = canonical_axis("devices", &axes.devices)?;
    let speeds = canonical_axis("speeds", &axes.speeds)?;
    let mut out = Vec::with_capacity(platforms.len() * devices.len() * speeds.len());
    for p in &platforms {
        for d in &devices {
            for s in &speeds {
                out.push(KeywordTuple {
                    platform: p.clone(),
                    device_class: d.clone(),
                    speed_marker: s.clone(),
                    window: axes.window,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_sizes_and_order() {
        let axes = KeywordAxes::new(
            ["silicon", "lithium niobate"],
            ["modulator", "laser", "detector"],
            ["200G", "100G"],
        );
        let m = expand_matrix(&axes).unwrap();
        assert_eq!(m.len(), 12);
        assert_eq!(m[0].platform, "lithium niobate");
        assert_eq!(m[0].device_class, "detector");
        assert_eq!(m[0].speed_marker, "100G");
        let mut sorted = m.clone();
        sorted.sort();
        assert_eq!(m, sorted);

        let permuted = KeywordAxes::new(
            ["lithium niobate", "silicon"],
            ["laser", "detector", "modulator"],
            ["100G", "200G"],
        );
        assert_eq!(expand_matrix(&permuted).unwrap(), m);
        assert_eq!(expand_matrix(&KeywordAxes::new(["a"], ["b"], ["c"])).unwrap().len(), 1);
    }

    #[test]
    fn empty_axis_is_config_error() {
        let axes = KeywordAxes::new(vec!["a"], Vec::<&str>::new(), vec!["c"]);
        assert!(matches!(expand_matrix(&axes), Err(IngestError::Config(_))));
    }

    #[test]
    fn window() {
        let t = &expand_matrix(&KeywordAxes::new(["a"], ["b"], ["c"])).unwrap()[0];
        assert!(!t.in_window(2017));
        assert!(t.in_window(2018));
        assert!(t.in_window(2031));
    }
}
