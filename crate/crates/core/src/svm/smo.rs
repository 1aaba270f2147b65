//! Sequential minimal optimization for
//! `min 1/2 a'Qa + p'a  s.t.  y'a = const, 0 <= a_i <= C`
//! with second-order working-set selection.

const TAU: f64 = 1e-12;

/// `Q_ij = y_i y_j K(idx_i, idx_j)` over a shared Gram matrix.
pub(crate) struct SignedGram<'a> {
    pub gram: &'a [f64],
    pub n: usize,
    pub index: Vec<usize>,
    pub sign: Vec<f64>,
}

impl SignedGram<'_> {
    fn len(&self) -> usize {
        self.index.len()
    }

    #[inline]
    fn q(&self, i: usize, j: usize) -> f64 {
        self.sign[i] * self.sign[j] * self.gram[self.index[i] * self.n + self.index[j]]
    }

    fn row(&self, i: usize, out: &mut [f64]) {
        let base = self.index[i] * self.n;
        let si = self.sign[i];
        for (k, o) in out.iter_mut().enumerate() {
            *o = si * self.sign[k] * self.gram[base + self.index[k]];
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct SmoSettings {
    pub tolerance: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub converged: bool,
}

pub(crate) fn solve(q: &SignedGram, p: &[f64], upper: f64, mut alpha: Vec<f64>, settings: SmoSettings) -> SmoSolution {
    let l = q.len();
    let y = &q.sign;
    let qd: Vec<f64> = (0..l).map(|i| q.q(i, i)).collect();
    let mut grad = p.to_vec();
    let mut row = vec![0.0; l];
    for (i, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            q.row(i, &mut row);
            for (g, r) in grad.iter_mut().zip(&row) {
                *g += a * r;
            }
        }
    }
    let mut qi = vec![0.0; l];
    let mut qj = vec![0.0; l];
    let mut converged = false;

    for _ in 0..settings.max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..l {
            if y[t] > 0.0 {
                if alpha[t] < upper && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i = t;
                }
            } else if alpha[t] > 0.0 && grad[t] >= gmax {
                gmax = grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            converged = true;
            break;
        }
        q.row(i, &mut qi);

        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..l {
            let (diff, quad) = if y[t] > 0.0 {
                if alpha[t] <= 0.0 {
                    continue;
                }
                gmax2 = gmax2.max(grad[t]);
                (gmax + grad[t], qd[i] + qd[t] - 2.0 * y[i] * qi[t])
            } else {
                if alpha[t] >= upper {
                    continue;
                }
                gmax2 = gmax2.max(-grad[t]);
                (gmax - grad[t], qd[i] + qd[t] + 2.0 * y[i] * qi[t])
            };
            if diff > 0.0 {
                let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < settings.tolerance || j == usize::MAX {
            converged = true;
            break;
        }
        q.row(j, &mut qj);

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        let c = upper;
        if y[i] != y[j] {
            let quad = qd[i] + qd[j] + 2.0 * qi[j];
            let delta = (-grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = qd[i] + qd[j] - 2.0 * qi[j];
            let delta = (grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for k in 0..l {
            grad[k] += qi[k] * di + qj[k] * dj;
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..l {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= upper;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    SmoSolution { alpha, rho, converged }
}
