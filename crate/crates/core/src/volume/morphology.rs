//! Binary dilation, connected-component labelling and surface extraction.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Grid, Mask3, FACE6};

/// Voxel adjacency used by dilation and component labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// Voxels sharing a face.
    Face6,
    /// Voxels sharing a face, edge or corner.
    #[default]
    Full26,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> Vec<[isize; 3]> {
        match self {
            Connectivity::Face6 => FACE6.to_vec(),
            Connectivity::Full26 => {
                let mut v = Vec::with_capacity(26);
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            if (dz, dy, dx) != (0, 0, 0) {
                                v.push([dz, dy, dx]);
                            }
                        }
                    }
                }
                v
            }
        }
    }
}

/// Neighbourhood of one dilation step, applied `radius` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub connectivity: Connectivity,
    pub radius: u32,
}

impl StructuringElement {
    pub fn new(connectivity: Connectivity, radius: u32) -> Option<Self> {
        (radius >= 1).then_some(Self {
            connectivity,
            radius,
        })
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::Face6,
            radius: 2,
        }
    }
}

fn neighbor(grid: &Grid, c: [usize; 3], off: [isize; 3]) -> Option<usize> {
    let mut n = [0usize; 3];
    for a in 0..3 {
        let v = c[a] as isize + off[a];
        if v < 0 || v >= grid.dims[a] as isize {
            return None;
        }
        n[a] = v as usize;
    }
    Some(grid.index(n[0], n[1], n[2]))
}

/// Morphological dilation. A radius of 0 is treated as the identity.
pub fn dilate(mask: &Mask3, se: StructuringElement) -> Mask3 {
    let grid = *mask.grid();
    let offsets = se.connectivity.offsets();
    let mut current = mask.clone();
    // Only voxels that turned on in the previous step can spread further.
    let mut frontier: Vec<usize> = current.foreground().collect();
    for _ in 0..se.radius {
        let mut next = Vec::new();
        for &i in &frontier {
            let c = grid.coords(i);
            for &off in &offsets {
                if let Some(j) = neighbor(&grid, c, off) {
                    if !current.get(j) {
                        current.set(j, true);
                        next.push(j);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    current
}

/// Component labels: 0 for background, `1..=count` for foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    pub grid: Grid,
    pub labels: Vec<u32>,
    pub count: u32,
}

impl LabelVolume {
    pub fn get(&self, index: usize) -> u32 {
        self.labels[index]
    }

    /// Voxel count of each component, indexed by `label - 1`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.count as usize];
        for &l in &self.labels {
            if l > 0 {
                sizes[l as usize - 1] += 1;
            }
        }
        sizes
    }
}

/// Label connected foreground components.
///
/// Labels are assigned in ascending order of each component's smallest
/// linear index, so the output depends only on the mask.
pub fn connected_components(mask: &Mask3, connectivity: Connectivity) -> LabelVolume {
    let grid = *mask.grid();
    let offsets = connectivity.offsets();
    let mut labels = vec![0u32; grid.len()];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for seed in 0..grid.len() {
        if !mask.get(seed) || labels[seed] != 0 {
            continue;
        }
        count += 1;
        labels[seed] = count;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            let c = grid.coords(i);
            for &off in &offsets {
                if let Some(j) = neighbor(&grid, c, off) {
                    if mask.get(j) && labels[j] == 0 {
                        labels[j] = count;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    LabelVolume {
        grid,
        labels,
        count,
    }
}

/// Foreground voxels with at least one face neighbour that is background or
/// outside the volume, as `(z, y, x)` in ascending linear-index order.
pub fn surface_voxels(mask: &Mask3) -> Vec<[usize; 3]> {
    let grid = *mask.grid();
    mask.foreground()
        .filter_map(|i| {
            let c = grid.coords(i);
            let boundary = FACE6
                .iter()
                .any(|&off| neighbor(&grid, c, off).is_none_or(|j| !mask.get(j)));
            boundary.then_some(c)
        })
        .collect()
}
