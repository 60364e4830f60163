//! Brute-force verifiers for the solver.
//!
//! Everything here works from raw instance data with its own rate and cost
//! formulas, so a bug in the solver path cannot leak into the reference.

use crate::error::{invalid, Error, Result};
use crate::solver::{Instance, Uplink};

/// Evenly spaced points `lo, ..., hi`. One step means the single point `lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        let ok = match steps {
            0 => false,
            1 => lo == hi,
            _ => lo < hi,
        };
        if !ok || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid(format!(
                "bad grid axis [{lo}, {hi}] with {steps} steps"
            )));
        }
        Ok(Self { lo, hi, steps })
    }

    pub fn point(lo: f64) -> Self {
        Self {
            lo,
            hi: lo,
            steps: 1,
        }
    }

    pub fn value(&self, k: usize) -> f64 {
        if self.steps == 1 {
            return self.lo;
        }
        if k + 1 == self.steps {
            return self.hi;
        }
        self.lo + (self.hi - self.lo) * k as f64 / (self.steps - 1) as f64
    }
}

/// Grid over `(p, f, v)` for every client.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// One `[p, f, v]` axis triple per client.
    pub axes: Vec<[Axis; 3]>,
    /// Neighbourhood radius, in cells, used for tolerance bands.
    pub tolerance_cells: usize,
}

pub const DEFAULT_STEPS: usize = 64;
const MAX_GRID_POINTS: f64 = 5e7;

impl GridSpec {
    /// Default grid spanning each client's box, `v` over `[0, v_max]`.
    pub fn for_instance(instance: &Instance, steps: usize) -> Result<Self> {
        let axes = instance
            .clients
            .iter()
            .map(|c| {
                let v = if c.v_max > 0.0 {
                    Axis::new(0.0, c.v_max, steps)?
                } else {
                    Axis::point(0.0)
                };
                let p = if c.p_max > c.p_min {
                    Axis::new(c.p_min, c.p_max, steps)?
                } else {
                    Axis::point(c.p_min)
                };
                let f = if c.f_max > c.f_min {
                    Axis::new(c.f_min, c.f_max, steps)?
                } else {
                    Axis::point(c.f_min)
                };
                Ok([p, f, v])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            axes,
            tolerance_cells: 2,
        })
    }
}

/// Best grid point: per-client `(p, f, v)` and grid indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub point: Vec<[f64; 3]>,
    pub index: Vec<[usize; 3]>,
    pub energy: f64,
}

fn log2_1p(x: f64) -> f64 {
    (1.0 + x).log2()
}

/// Round energy of a full point, or `None` if a constraint is violated.
fn point_energy(inst: &Instance, point: &[[f64; 3]]) -> Option<f64> {
    let n = inst.clients.len();
    let t_max = inst.server.t_max;
    // twin workload must fit on the whole server within the deadline
    let twin: f64 = inst
        .clients
        .iter()
        .zip(point)
        .map(|(c, x)| c.cycles_per_sample * (x[2] * c.data_size + inst.server.dt_deviation))
        .sum();
    if twin / inst.server.f_server > t_max {
        return None;
    }
    let mut t_com: f64 = 0.0;
    for i in 0..n {
        let c = &inst.clients[i];
        if c.model_bits == 0.0 {
            continue;
        }
        let r = match inst.uplink {
            Uplink::Noma => {
                // SIC: clients with weaker gain (or equal gain and larger id) decoded later
                let mut noise = inst.noise_power;
                for j in 0..n {
                    let later = inst.gains[j] < inst.gains[i]
                        || (inst.gains[j] == inst.gains[i] && inst.clients[j].id > c.id);
                    if later {
                        noise += point[j][0] * inst.gains[j];
                    }
                }
                inst.bandwidth * log2_1p(point[i][0] * inst.gains[i] / noise)
            }
            Uplink::Oma => {
                let share = n as f64;
                inst.bandwidth / share
                    * log2_1p(point[i][0] * inst.gains[i] * share / inst.noise_power)
            }
        };
        if !(r > 0.0) {
            return None;
        }
        t_com = t_com.max(c.model_bits / r);
    }
    let mut energy = 0.0;
    for (c, x) in inst.clients.iter().zip(point) {
        let cycles = c.cycles_per_sample * (1.0 - x[2]) * c.data_size;
        if cycles / x[1] + t_com > t_max {
            return None;
        }
        energy += 0.5 * inst.server.kappa * cycles * x[1] * x[1] + x[0] * t_com;
    }
    Some(energy)
}

fn for_each_index(dims: &[usize], mut visit: impl FnMut(&[usize])) {
    if dims.iter().any(|&d| d == 0) {
        return;
    }
    let mut idx = vec![0; dims.len()];
    loop {
        visit(&idx);
        let mut k = dims.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn dims(spec: &GridSpec) -> Vec<usize> {
    spec.axes
        .iter()
        .flat_map(|a| a.iter().map(|x| x.steps))
        .collect()
}

fn decode(spec: &GridSpec, flat: &[usize]) -> Vec<[f64; 3]> {
    spec.axes
        .iter()
        .enumerate()
        .map(|(i, a)| {
            [
                a[0].value(flat[3 * i]),
                a[1].value(flat[3 * i + 1]),
                a[2].value(flat[3 * i + 2]),
            ]
        })
        .collect()
}

/// Exhaustive minimum of `E` over the grid subject to the deadline, the
/// box constraints and twin feasibility. Ties go to the lexicographically
/// smallest index.
pub fn grid_min_energy(instance: &Instance, spec: &GridSpec) -> Result<GridOptimum> {
    if spec.axes.len() != instance.clients.len() || instance.gains.len() != instance.clients.len() {
        return Err(invalid("grid and instance sizes disagree"));
    }
    let dims = dims(spec);
    if dims.iter().map(|&d| d as f64).product::<f64>() > MAX_GRID_POINTS {
        return Err(invalid("grid too large"));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_index(&dims, |flat| {
        if let Some(e) = point_energy(instance, &decode(spec, flat)) {
            if best.as_ref().map_or(true, |(b, _)| e < *b) {
                best = Some((e, flat.to_vec()));
            }
        }
    });
    let (energy, flat) = best.ok_or(Error::EmptyFeasibleSet)?;
    Ok(GridOptimum {
        point: decode(spec, &flat),
        index: flat.chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
        energy,
    })
}

/// Largest minus smallest feasible energy over grid points within
/// `spec.tolerance_cells` (Chebyshev distance in index space) of `at`.
pub fn neighborhood_spread(instance: &Instance, spec: &GridSpec, at: &GridOptimum) -> f64 {
    let r = spec.tolerance_cells;
    let width = 2 * r + 1;
    let base: Vec<usize> = at.index.iter().flatten().copied().collect();
    let dims = dims(spec);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for_each_index(&vec![width; base.len()], |off| {
        let mut flat = Vec::with_capacity(base.len());
        for k in 0..base.len() {
            let i = base[k] as isize + off[k] as isize - r as isize;
            if i < 0 || i as usize >= dims[k] {
                return;
            }
            flat.push(i as usize);
        }
        if let Some(e) = point_energy(instance, &decode(spec, &flat)) {
            lo = lo.min(e);
            hi = hi.max(e);
        }
    });
    if hi < lo {
        0.0
    } else {
        hi - lo
    }
}

/// Best server split found on the simplex grid `alpha_i = k_i / resolution`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaOptimum {
    pub alpha: Vec<f64>,
    /// `max(t_total, max_i t_S_i)`.
    pub makespan: f64,
}

/// Exhaustive minimum of the round makespan `max(t_total, max_i w_i / (alpha_i f_S))`
/// over `sum(alpha) <= 1`.
pub fn grid_min_makespan_alpha(
    works: &[f64],
    f_server: f64,
    t_total: f64,
    resolution: usize,
) -> Result<AlphaOptimum> {
    if works.is_empty() || resolution == 0 || works.len() > 4 {
        return Err(invalid(
            "alpha grid supports 1 to 4 clients and positive resolution",
        ));
    }
    let n = works.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut ks = vec![0usize; n];
    #[allow(clippy::too_many_arguments)]
    fn rec(
        i: usize,
        left: usize,
        ks: &mut Vec<usize>,
        works: &[f64],
        f_server: f64,
        t_total: f64,
        res: usize,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if i == ks.len() {
            let mut span = t_total;
            for (w, &k) in works.iter().zip(ks.iter()) {
                if *w > 0.0 {
                    if k == 0 {
                        return;
                    }
                    span = span.max(w / (k as f64 / res as f64 * f_server));
                }
            }
            if best.as_ref().map_or(true, |(b, _)| span < *b) {
                *best = Some((span, ks.clone()));
            }
            return;
        }
        for k in 0..=left {
            ks[i] = k;
            rec(i + 1, left - k, ks, works, f_server, t_total, res, best);
        }
    }
    rec(
        0, resolution, &mut ks, works, f_server, t_total, resolution, &mut best,
    );
    let (makespan, ks) = best.ok_or(Error::EmptyFeasibleSet)?;
    Ok(AlphaOptimum {
        alpha: ks.iter().map(|&k| k as f64 / resolution as f64).collect(),
        makespan,
    })
}

/// Power constants for a single-link ratio search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioInstance {
    pub gain_ratio: f64,
    pub bits: f64,
    pub bandwidth: f64,
    pub deadline: f64,
    pub p_min: f64,
    pub p_max: f64,
}

/// Argmax of `B log2(1 + p F) / (p d)` over feasible `p` on a grid no
/// coarser than `resolution` watts.
pub fn ratio_grid_max(inst: &RatioInstance, resolution: f64) -> Result<f64> {
    if !(resolution > 0.0) {
        return Err(invalid("resolution must be positive"));
    }
    let span = inst.p_max - inst.p_min;
    let steps = (span / resolution).ceil() as usize;
    let need = inst.bits / inst.deadline;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..=steps {
        let p = if steps == 0 {
            inst.p_min
        } else {
            inst.p_min + span * k as f64 / steps as f64
        };
        let r = inst.bandwidth * log2_1p(p * inst.gain_ratio);
        if r < need {
            continue;
        }
        let ratio = r / (p * inst.bits);
        if best.map_or(true, |(_, b)| ratio > b) {
            best = Some((p, ratio));
        }
    }
    best.map(|b| b.0).ok_or(Error::EmptyFeasibleSet)
}

/// Two-link SIC instance: link 0 is decoded first and sees link 1's signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairInstance {
    pub gains: [f64; 2],
    pub bits: [f64; 2],
    pub deadline: f64,
    pub noise_power: f64,
    pub bandwidth: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl PairInstance {
    fn rates(&self, p: [f64; 2]) -> [f64; 2] {
        let b = self.bandwidth;
        [
            b * log2_1p(p[0] * self.gains[0] / (p[1] * self.gains[1] + self.noise_power)),
            b * log2_1p(p[1] * self.gains[1] / self.noise_power),
        ]
    }

    /// `sum p_n d_n / R_n` if both links meet the deadline.
    pub fn energy(&self, p: [f64; 2]) -> Option<f64> {
        let r = self.rates(p);
        let t = [self.bits[0] / r[0], self.bits[1] / r[1]];
        (t[0] <= self.deadline && t[1] <= self.deadline).then(|| p[0] * t[0] + p[1] * t[1])
    }
}

/// Minimum of [`PairInstance::energy`] by a square grid refined around the
/// incumbent a fixed number of times.
pub fn grid_min_power_pair(
    inst: &PairInstance,
    steps: usize,
    refinements: usize,
) -> Result<([f64; 2], f64)> {
    if steps < 2 {
        return Err(invalid("need at least two steps"));
    }
    let (mut lo, mut hi) = ([inst.p_min; 2], [inst.p_max; 2]);
    let mut best: Option<([f64; 2], f64)> = None;
    for _ in 0..=refinements {
        let h = [
            (hi[0] - lo[0]) / (steps - 1) as f64,
            (hi[1] - lo[1]) / (steps - 1) as f64,
        ];
        for i in 0..steps {
            for j in 0..steps {
                let p = [lo[0] + h[0] * i as f64, lo[1] + h[1] * j as f64];
                if let Some(e) = inst.energy(p) {
                    if best.map_or(true, |(_, b)| e < b) {
                        best = Some((p, e));
                    }
                }
            }
        }
        let (p, _) = best.ok_or(Error::EmptyFeasibleSet)?;
        for k in 0..2 {
            lo[k] = (p[k] - 2.0 * h[k]).max(inst.p_min);
            hi[k] = (p[k] + 2.0 * h[k]).min(inst.p_max);
        }
    }
    best.ok_or(Error::EmptyFeasibleSet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{AcParams, ClientProfile, ServerProfile};

    fn instance(t_max: f64) -> Instance {
        Instance {
            clients: vec![ClientProfile {
                id: 0,
                data_size: 1000.0,
                cycles_per_sample: 1e7,
                f_min: 1e9,
                f_max: 1e10,
                p_min: 0.01,
                p_max: 0.1,
                v_max: 0.5,
                model_bits: 1e6,
                honest: true,
                ac: AcParams::default(),
            }],
            gains: vec![1e-10],
            server: ServerProfile {
                f_server: 1e11,
                dt_deviation: 0.0,
                t_max,
                kappa: 2e-28,
            },
            bandwidth: 1e6,
            noise_power: 3.981e-15,
            uplink: Uplink::Noma,
        }
    }

    #[test]
    fn axis_values() {
        let a = Axis::new(1.0, 2.0, 3).unwrap();
        assert_eq!((a.value(0), a.value(1), a.value(2)), (1.0, 1.5, 2.0));
        assert!(Axis::new(2.0, 1.0, 3).is_err());
        assert!(Axis::new(1.0, 2.0, 1).is_err());
        assert_eq!(Axis::point(4.0).value(0), 4.0);
    }

    #[test]
    fn generous_deadline_corner() {
        let inst = instance(10.0);
        let spec = GridSpec::for_instance(&inst, 16).unwrap();
        let best = grid_min_energy(&inst, &spec).unwrap();
        assert_eq!(best.point[0], [0.01, 1e9, 0.5]);
    }

    #[test]
    fn single_point_grid() {
        let inst = instance(10.0);
        let spec = GridSpec {
            axes: vec![[Axis::point(0.02), Axis::point(2e9), Axis::point(0.25)]],
            tolerance_cells: 2,
        };
        let best = grid_min_energy(&inst, &spec).unwrap();
        let r = 1e6 * (1.0 + 0.02 * 1e-10 / 3.981e-15f64).log2();
        let cycles = 1e7 * 0.75 * 1000.0;
        let expect = 1e-28 * cycles * 4e18 + 0.02 * 1e6 / r;
        assert!((best.energy - expect).abs() <= 1e-12 * expect);
        assert_eq!(neighborhood_spread(&inst, &spec, &best), 0.0);
    }

    #[test]
    fn impossible_deadline_is_empty() {
        let inst = instance(0.3);
        let spec = GridSpec::for_instance(&inst, 8).unwrap();
        assert!(matches!(
            grid_min_energy(&inst, &spec),
            Err(Error::EmptyFeasibleSet)
        ));
    }

    #[test]
    fn alpha_grid() {
        let sym = grid_min_makespan_alpha(&[5e9; 3], 1e9, 1.0, 63).unwrap();
        assert!(sym.alpha.iter().all(|a| (a - 1.0 / 3.0).abs() < 1e-12));
        let sat = grid_min_makespan_alpha(&[6e9, 4e9], 1e9, 1.0, 10).unwrap();
        assert_eq!(sat.alpha, vec![0.6, 0.4]);
        assert!((sat.makespan - 10.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_grid() {
        let base = RatioInstance {
            gain_ratio: 1e4,
            bits: 1e6,
            bandwidth: 1e6,
            deadline: 2.0,
            p_min: 0.01,
            p_max: 0.1,
        };
        assert_eq!(ratio_grid_max(&base, 1e-6).unwrap(), 0.01);
        let open = RatioInstance {
            deadline: f64::INFINITY,
            ..base
        };
        assert_eq!(ratio_grid_max(&open, 1e-6).unwrap(), 0.01);
        let point = RatioInstance {
            p_min: 0.05,
            p_max: 0.05,
            ..base
        };
        assert_eq!(ratio_grid_max(&point, 1e-6).unwrap(), 0.05);
        let hopeless = RatioInstance {
            gain_ratio: 1e2,
            deadline: 0.1,
            ..base
        };
        assert!(ratio_grid_max(&hopeless, 1e-6).is_err());
    }

    #[test]
    fn pair_grid_finds_boundary() {
        let inst = PairInstance {
            gains: [1e-10, 1e-12],
            bits: [1e6, 1e6],
            deadline: 0.5,
            noise_power: 3.981e-15,
            bandwidth: 1e6,
            p_min: 0.01,
            p_max: 0.1,
        };
        let (p, _) = grid_min_power_pair(&inst, 101, 8).unwrap();
        // link 1 needs 2 Mbit/s interference-free: p = 3 sigma^2 / g
        assert!((p[1] - 3.0 * 3.981e-15 / 1e-12).abs() < 1e-6);
        assert_eq!(p[0], 0.01);
    }
}
