use super::{default_grid, AnalysisError};
use crate::lti::{LtiError, StateSpaceModel};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// A square loop transfer broken at one point, evaluated on the imaginary axis
/// (or the unit circle for sampled loops).
pub trait LoopResponse {
    fn dim(&self) -> usize;
    fn response(&self, omega: f64) -> Result<DMatrix<Complex64>, LtiError>;
    /// Highest meaningful frequency (Nyquist for sampled loops).
    fn max_frequency(&self) -> Option<f64>;
    fn closed_loop_stable(&self) -> bool;
}

impl LoopResponse for StateSpaceModel {
    fn dim(&self) -> usize {
        self.outputs()
    }

    fn response(&self, omega: f64) -> Result<DMatrix<Complex64>, LtiError> {
        self.freq_response(omega)
    }

    fn max_frequency(&self) -> Option<f64> {
        self.is_discrete().then(|| std::f64::consts::PI / self.ts)
    }

    fn closed_loop_stable(&self) -> bool {
        self.unity_feedback().map(|cl| cl.is_stable()).unwrap_or(false)
    }
}

/// Loop with a pure transport delay in series. Stability is judged on the delay-free loop.
#[derive(Debug, Clone)]
pub struct DelayedLoop {
    pub model: StateSpaceModel,
    pub delay: f64,
}

impl LoopResponse for DelayedLoop {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn response(&self, omega: f64) -> Result<DMatrix<Complex64>, LtiError> {
        let phase = Complex64::from_polar(1.0, -omega * self.delay);
        Ok(self.model.freq_response(omega)? * phase)
    }

    fn max_frequency(&self) -> Option<f64> {
        self.model.max_frequency()
    }

    fn closed_loop_stable(&self) -> bool {
        self.model.closed_loop_stable()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiskSelection {
    /// Loop-at-a-time margin of one channel, the others closed.
    Channel(usize),
    /// Simultaneous perturbation of every channel.
    All,
}

/// Symmetric disk margin. Infinite margins are `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskMargin {
    pub alpha: f64,
    pub gain_margin_db: f64,
    pub phase_margin_deg: f64,
    pub peak_frequency: f64,
}

impl DiskMargin {
    pub fn from_alpha(alpha: f64, peak_frequency: f64) -> Self {
        let gain_margin_db = if alpha >= 1.0 {
            f64::INFINITY
        } else {
            20.0 * ((1.0 + alpha) / (1.0 - alpha)).log10()
        };
        Self {
            alpha,
            gain_margin_db,
            phase_margin_deg: (2.0 * alpha.atan()).to_degrees(),
            peak_frequency,
        }
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn sigma_max(m: &DMatrix<Complex64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Upper bound on the diagonal structured singular value: `min_D σ̄(D M D⁻¹)`.
pub(crate) fn scaled_sigma(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    if n == 1 {
        return m[(0, 0)].norm();
    }
    let scaled = |logd: &[f64]| {
        let s = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * 10f64.powf(logd[i] - logd[j]));
        sigma_max(&s)
    };
    let mut logd = vec![0.0; n];
    let mut best = scaled(&logd);
    for _ in 0..if n == 2 { 1 } else { 20 } {
        for k in 1..n {
            let (x, v) = golden_min(
                |t| {
                    let mut d = logd.clone();
                    d[k] = t;
                    scaled(&d)
                },
                logd[k] - 6.0,
                logd[k] + 6.0,
                1e-7,
            );
            if v < best {
                best = v;
                logd[k] = x;
            }
        }
    }
    best
}

/// Peak of the selected balanced-sensitivity measure at one frequency.
fn peak_at(l: &dyn LoopResponse, sel: DiskSelection, omega: f64) -> Result<f64, AnalysisError> {
    let n = l.dim();
    let lm = l.response(omega)?;
    let eye = DMatrix::<Complex64>::identity(n, n);
    let s = (&eye + lm).try_inverse().ok_or(AnalysisError::UnstableLoop)?;
    // S − T = 2S − I
    let m = s * Complex64::new(2.0, 0.0) - eye;
    Ok(match sel {
        DiskSelection::Channel(i) => m[(i, i)].norm(),
        DiskSelection::All => scaled_sigma(&m),
    })
}

/// Symmetric disk margin from the peak of `S − T` over the default grid, refined near the peak.
pub fn disk_margins(l: &dyn LoopResponse, sel: DiskSelection) -> Result<DiskMargin, AnalysisError> {
    if let DiskSelection::Channel(i) = sel {
        if i >= l.dim() {
            return Err(AnalysisError::Shape {
                expected: "channel index within loop size",
                rows: l.dim(),
                cols: l.dim(),
            });
        }
    }
    if !l.closed_loop_stable() {
        return Err(AnalysisError::UnstableLoop);
    }
    let mut grid = default_grid();
    if let Some(wmax) = l.max_frequency() {
        grid.retain(|&w| w < wmax);
        grid.push(wmax * (1.0 - 1e-9));
    }
    let mut vals = Vec::with_capacity(grid.len());
    for &w in &grid {
        vals.push(peak_at(l, sel, w)?);
    }
    let (k, &v) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    let lo = grid[k.saturating_sub(1)].ln();
    let hi = grid[(k + 1).min(grid.len() - 1)].ln();
    let (x, neg) = golden_min(|t| -peak_at(l, sel, t.exp()).unwrap_or(0.0), lo, hi, 1e-9);
    let (peak, w) = if -neg > v { (-neg, x.exp()) } else { (v, grid[k]) };
    let alpha = if peak > 0.0 { 1.0 / peak } else { f64::INFINITY };
    let mut margin = DiskMargin::from_alpha(alpha, w);
    if sel == DiskSelection::All {
        // the scaled bound dominates every diagonal entry, so it can never beat a single channel
        for ch in 0..l.dim() {
            let single = disk_margins(l, DiskSelection::Channel(ch))?;
            if single.alpha < margin.alpha {
                margin = single;
            }
        }
    }
    Ok(margin)
}
