//! Fixtures and brute-force oracles shared by the integration tests. The
//! oracles deliberately avoid the library's own helpers.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voxelgraph::gcn::GcnModel;
use voxelgraph::graph::{normalize_adjacency, FeatureMatrix, SparseGraph, FEATURE_COUNT};
use voxelgraph::linalg::Matrix;
use voxelgraph::phantom::{FalsePositive, Lesion, PhantomSpec};
use voxelgraph::uncertainty::{Node, NodeSet, Role};
use voxelgraph::volume::{Grid, Mask3, Volume3};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_dims(rng: &mut ChaCha8Rng, max: usize) -> [usize; 3] {
    [rng.gen_range(1..=max), rng.gen_range(1..=max), rng.gen_range(1..=max)]
}

// ---------------------------------------------------------------- entropy

/// Natural-log entropy rescaled to bits.
pub fn entropy_oracle(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h / std::f64::consts::LN_2
}

/// Roots of `entropy = alpha` on each side of 0.5, by plain bisection.
pub fn band_oracle(alpha: f64) -> (f64, f64) {
    let root = |mut a: f64, mut b: f64, rising: bool| {
        for _ in 0..2000 {
            let m = 0.5 * (a + b);
            if m == a || m == b {
                break;
            }
            let above = entropy_oracle(m) > alpha;
            if above == rising {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    };
    (root(0.0, 0.5, true), root(0.5, 1.0, false))
}

/// Expected role of every voxel; `None` means "not a node".
pub fn roles_oracle(prob: &[f64], dims: [usize; 3], alpha: f64, beta: f64, radius: usize) -> Vec<Option<Role>> {
    let (lo, hi) = band_oracle(alpha);
    let [nz, ny, nx] = dims;
    let idx = |z: usize, y: usize, x: usize| (z * ny + y) * nx + x;
    let uncertain: Vec<bool> = prob.iter().map(|&p| p > lo && p < hi).collect();
    let confident: Vec<bool> = prob.iter().map(|&p| p > beta).collect();
    let seed: Vec<bool> = uncertain.iter().zip(&confident).map(|(a, b)| *a || *b).collect();
    let mut out = vec![None; prob.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = idx(z, y, x);
                out[i] = if uncertain[i] {
                    Some(Role::Test)
                } else if confident[i] {
                    Some(Role::TrainPositive)
                } else {
                    // Face-connected dilation of radius r is the L1 ball.
                    let r = radius as isize;
                    let mut near = false;
                    for dz in -r..=r {
                        for dy in -r..=r {
                            for dx in -r..=r {
                                if dz.abs() + dy.abs() + dx.abs() > r {
                                    continue;
                                }
                                let (zz, yy, xx) = (z as isize + dz, y as isize + dy, x as isize + dx);
                                if zz < 0 || yy < 0 || xx < 0 {
                                    continue;
                                }
                                let (zz, yy, xx) = (zz as usize, yy as usize, xx as usize);
                                if zz < nz && yy < ny && xx < nx && seed[idx(zz, yy, xx)] {
                                    near = true;
                                }
                            }
                        }
                    }
                    near.then_some(Role::TrainNegative)
                };
            }
        }
    }
    out
}

/// Probability volume mixing smooth structure, uncertain-band values and
/// exact 0/1 entries.
pub fn random_prob_volume(rng: &mut ChaCha8Rng, max_side: usize) -> Volume3 {
    let dims = random_dims(rng, max_side);
    let grid = Grid::unit(dims).unwrap();
    let blobs: Vec<([f64; 3], f64)> = (0..rng.gen_range(0..4))
        .map(|_| {
            let c = [0, 1, 2].map(|a| rng.gen_range(0.0..dims[a] as f64));
            (c, rng.gen_range(1.0..6.0))
        })
        .collect();
    let data = (0..grid.len())
        .map(|i| {
            let [z, y, x] = grid.coords(i);
            let pos = [z as f64, y as f64, x as f64];
            match rng.gen_range(0..10) {
                0 => rng.gen::<f64>(),
                1 => [0.0, 1.0, 0.5][rng.gen_range(0..3)],
                _ => {
                    let s: f64 = blobs
                        .iter()
                        .map(|(c, r)| {
                            let d2: f64 = (0..3).map(|a| (pos[a] - c[a]).powi(2)).sum();
                            (-d2 / (r * r)).exp()
                        })
                        .sum();
                    (s + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0)
                }
            }
        })
        .collect();
    Volume3::from_f64(grid, data).unwrap()
}

// ---------------------------------------------------------------- metrics

/// Face-connected boundary voxels; the volume edge counts as background.
pub fn surface_oracle(mask: &Mask3) -> Vec<[usize; 3]> {
    let [nz, ny, nx] = mask.dims();
    let on = |z: isize, y: isize, x: isize| {
        z >= 0
            && y >= 0
            && x >= 0
            && (z as usize) < nz
            && (y as usize) < ny
            && (x as usize) < nx
            && mask.get((z as usize * ny + y as usize) * nx + x as usize)
    };
    let mut out = Vec::new();
    for z in 0..nz as isize {
        for y in 0..ny as isize {
            for x in 0..nx as isize {
                if !on(z, y, x) {
                    continue;
                }
                let nbs = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)];
                if nbs.iter().any(|&(a, b, c)| !on(z + a, y + b, x + c)) {
                    out.push([z as usize, y as usize, x as usize]);
                }
            }
        }
    }
    out
}

pub fn directed_oracle(from: &[[usize; 3]], to: &[[usize; 3]], spacing: [f64; 3]) -> Vec<f64> {
    from.iter()
        .map(|p| {
            to.iter()
                .map(|q| {
                    (0..3)
                        .map(|a| ((p[a] as f64 - q[a] as f64) * spacing[a]).powi(2))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// Linear-interpolation percentile (numpy's default).
pub fn percentile_oracle(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub struct MetricOracle {
    pub dice: f64,
    pub hd95: Option<f64>,
    pub assd: Option<f64>,
}

pub fn metrics_oracle(pred: &Mask3, gt: &Mask3, spacing: [f64; 3]) -> MetricOracle {
    let a = pred.as_slice().iter().filter(|&&v| v == 1).count();
    let b = gt.as_slice().iter().filter(|&&v| v == 1).count();
    let inter = pred.as_slice().iter().zip(gt.as_slice()).filter(|(x, y)| **x == 1 && **y == 1).count();
    let dice = if a + b == 0 { 1.0 } else { 2.0 * inter as f64 / (a + b) as f64 };
    let (sa, sb) = (surface_oracle(pred), surface_oracle(gt));
    if sa.is_empty() || sb.is_empty() {
        return MetricOracle { dice, hd95: None, assd: None };
    }
    let ab = directed_oracle(&sa, &sb, spacing);
    let ba = directed_oracle(&sb, &sa, spacing);
    let hd95 = percentile_oracle(&ab, 95.0).max(percentile_oracle(&ba, 95.0));
    let assd = (ab.iter().sum::<f64>() + ba.iter().sum::<f64>()) / (ab.len() + ba.len()) as f64;
    MetricOracle { dice, hd95: Some(hd95), assd: Some(assd) }
}

/// A few random boxes and balls, optionally empty.
pub fn random_mask(rng: &mut ChaCha8Rng, grid: Grid, allow_empty: bool) -> Mask3 {
    let shapes = rng.gen_range(if allow_empty { 0 } else { 1 }..4);
    let mut m = Mask3::zeros(grid);
    let dims = grid.dims;
    for _ in 0..shapes {
        let c = [0, 1, 2].map(|a| rng.gen_range(0..dims[a]) as f64);
        let r = [0, 1, 2].map(|_| rng.gen_range(0.5..5.0));
        let ball = rng.gen_bool(0.5);
        for i in 0..grid.len() {
            let p = grid.coords(i);
            let t = (0..3).map(|a| (p[a] as f64 - c[a]).abs() / r[a]);
            let hit = if ball { t.map(|v| v * v).sum::<f64>() <= 1.0 } else { t.fold(0.0, f64::max) <= 1.0 };
            if hit {
                m.set(i, true);
            }
        }
    }
    // Salt noise so surfaces are not always convex.
    for _ in 0..rng.gen_range(0..4) {
        let i = rng.gen_range(0..grid.len());
        m.set(i, !m.get(i));
    }
    if !allow_empty && m.count() == 0 {
        m.set(rng.gen_range(0..grid.len()), true);
    }
    m
}

// ---------------------------------------------------------------- graphs

/// Nodes laid out along a 1-voxel-thick line so voxel index = node index.
pub fn line_nodes(roles: &[Role]) -> NodeSet {
    let grid = Grid::unit([1, 1, roles.len()]).unwrap();
    NodeSet::new(
        grid,
        roles.iter().enumerate().map(|(voxel, &role)| Node { voxel, role }).collect(),
    )
    .unwrap()
}

pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(u32, u32)> {
    let mut e = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                e.push((i as u32, j as u32));
            }
        }
    }
    e
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect())
}

pub struct GcnFixture {
    pub graph: SparseGraph,
    pub features: FeatureMatrix,
    pub nodes: NodeSet,
    pub model: GcnModel,
    pub weight_decay: f64,
    pub pos_weight: f64,
}

/// Random graph, features, roles, weights and regulariser.
pub fn random_gcn_fixture(rng: &mut ChaCha8Rng, max_n: usize, max_h: usize) -> GcnFixture {
    let n = rng.gen_range(3..=max_n);
    let h = rng.gen_range(1..=max_h);
    let mut roles: Vec<Role> = (0..n)
        .map(|_| [Role::TrainPositive, Role::TrainNegative, Role::Test][rng.gen_range(0..3)])
        .collect();
    roles[0] = Role::TrainPositive;
    roles[1] = Role::TrainNegative;
    let p = rng.gen_range(0.1..0.6);
    GcnFixture {
        graph: normalize_adjacency(random_edges(rng, n, p), n).unwrap(),
        features: FeatureMatrix::from_matrix(random_matrix(rng, n, FEATURE_COUNT, 2.0)),
        nodes: line_nodes(&roles),
        model: GcnModel {
            w0: random_matrix(rng, FEATURE_COUNT, h, 1.0),
            w1: random_matrix(rng, h, 1, 1.0),
        },
        weight_decay: rng.gen_range(0.0..0.1),
        pos_weight: rng.gen_range(0.5..3.0),
    }
}

pub struct ToyGraph {
    pub graph: SparseGraph,
    pub features: FeatureMatrix,
    pub nodes: NodeSet,
    /// Community of each node (1 = positive).
    pub labels: Vec<u8>,
}

/// Two dense communities of 100 nodes each, sparsely cross-linked. The first
/// feature is a signed community indicator (±1) plus noise, the rest are pure
/// noise. The model has no bias terms, so the indicator is centred: the
/// bias-free linear classifier `sign(x0)` is then 100% accurate. Ten nodes
/// per community are labelled; the rest are Test.
pub fn toy_graph(seed: u64) -> ToyGraph {
    let mut rng = rng(seed);
    let n = 200;
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { 0.1 } else { 0.005 };
            if rng.gen_bool(p) {
                edges.push((i as u32, j as u32));
            }
        }
    }
    let data: Vec<f64> = (0..n)
        .flat_map(|i| {
            let c = 2.0 * labels[i] as f64 - 1.0;
            let noise: [f64; FEATURE_COUNT] = std::array::from_fn(|_| rng.gen_range(-0.2..0.2));
            [c + 2.0 * noise[0], noise[1], noise[2], noise[3]]
        })
        .collect();
    let roles: Vec<Role> = (0..n)
        .map(|i| match (i % 100 < 10, labels[i]) {
            (true, 1) => Role::TrainPositive,
            (true, _) => Role::TrainNegative,
            (false, _) => Role::Test,
        })
        .collect();
    ToyGraph {
        graph: normalize_adjacency(edges, n).unwrap(),
        features: FeatureMatrix::from_matrix(Matrix::from_vec(n, FEATURE_COUNT, data)),
        nodes: line_nodes(&roles),
        labels,
    }
}

// ---------------------------------------------------------------- phantoms

/// 64³ phantom with one bright lesion and one distant false-positive blob
/// whose PET and CT look like background. Placement, sizes and the blob's
/// probability level vary with the seed.
pub fn fp_phantom_spec(seed: u64) -> PhantomSpec {
    let mut r = rng(seed ^ 0x5eed_f00d);
    let mut spec = PhantomSpec::empty([64, 64, 64], [1.0, 1.0, 1.0], seed);
    let jitter = |r: &mut ChaCha8Rng| r.gen_range(-4.0..4.0);
    spec.lesions.push(Lesion {
        center: [20.0 + jitter(&mut r), 20.0 + jitter(&mut r), 20.0 + jitter(&mut r)],
        radii: [r.gen_range(5.0..8.0), r.gen_range(5.0..8.0), r.gen_range(5.0..8.0)],
        pet_intensity: r.gen_range(4.0..8.0),
    });
    spec.false_positives.push(FalsePositive {
        center: [44.0 + jitter(&mut r), 44.0 + jitter(&mut r), 44.0 + jitter(&mut r)],
        radii: [r.gen_range(3.0..5.0), r.gen_range(3.0..5.0), r.gen_range(3.0..5.0)],
        prob_level: r.gen_range(0.52..0.74),
        pet_intensity: 0.0,
    });
    spec.noise_sd = 0.02;
    spec
}
