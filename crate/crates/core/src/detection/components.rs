//! Two-pass connected-component labeling with union-find.

use serde::{Deserialize, Serialize};

use crate::error::FanError;
use crate::types::Mask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = FanError;

    fn try_from(v: u8) -> Result<Self, FanError> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(FanError::Config(format!("connectivity must be 4 or 8, got {other}"))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// Per-pixel component ids: 0 is background, components are `1..=count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
    pub count: u32,
}

impl LabelMap {
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0usize; self.count as usize];
        for &l in &self.labels {
            if l > 0 {
                areas[l as usize - 1] += 1;
            }
        }
        areas
    }

    /// One mask per component, in label order.
    pub fn masks(&self) -> Vec<Mask> {
        let mut values = vec![vec![0u8; self.labels.len()]; self.count as usize];
        for (i, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                values[l as usize - 1][i] = 1;
            }
        }
        values
            .into_iter()
            .map(|v| Mask::from_values(self.height, self.width, v).expect("binary by construction"))
            .collect()
    }

    pub fn component(&self, label: u32) -> Mask {
        Mask::from_fn(self.height, self.width, |x, y| self.get(x, y) == label)
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) -> u32 {
    let ra = find(parent, a);
    let rb = find(parent, b);
    // keep the smaller provisional label as root so roots follow scan order
    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
    parent[hi as usize] = lo;
    lo
}

/// Labels maximal connected sets of set pixels in first-encounter (row-major)
/// order, then drops components smaller than `min_area` and renumbers the
/// survivors so labels stay contiguous.
pub fn connected_components(binary: &Mask, connectivity: Connectivity, min_area: usize) -> LabelMap {
    let (h, w) = binary.shape();
    let src = binary.values();
    let mut labels = vec![0u32; h * w];
    // parent[0] is the background sentinel
    let mut parent: Vec<u32> = vec![0];

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if src[i] == 0 {
                continue;
            }
            let mut current = 0u32;
            let link = |other: u32, current: &mut u32, parent: &mut Vec<u32>| {
                if other == 0 {
                    return;
                }
                *current = if *current == 0 { other } else { union(parent, *current, other) };
            };
            if x > 0 {
                link(labels[i - 1], &mut current, &mut parent);
            }
            if y > 0 {
                link(labels[i - w], &mut current, &mut parent);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        link(labels[i - w - 1], &mut current, &mut parent);
                    }
                    if x + 1 < w {
                        link(labels[i - w + 1], &mut current, &mut parent);
                    }
                }
            }
            if current == 0 {
                current = parent.len() as u32;
                parent.push(current);
            }
            labels[i] = current;
        }
    }

    // Resolve roots and assign final ids in first-encounter order.
    let mut final_id = vec![0u32; parent.len()];
    let mut areas: Vec<usize> = Vec::new();
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = find(&mut parent, *l) as usize;
        if final_id[root] == 0 {
            areas.push(0);
            final_id[root] = areas.len() as u32;
        }
        *l = final_id[root];
        areas[*l as usize - 1] += 1;
    }

    let min_area = min_area.max(1);
    let mut count = areas.len() as u32;
    if areas.iter().any(|&a| a < min_area) {
        let mut remap = vec![0u32; areas.len() + 1];
        let mut next = 0u32;
        for (k, &a) in areas.iter().enumerate() {
            if a >= min_area {
                next += 1;
                remap[k + 1] = next;
            }
        }
        for l in labels.iter_mut() {
            *l = remap[*l as usize];
        }
        count = next;
    }

    LabelMap {
        height: h,
        width: w,
        labels,
        count,
    }
}
