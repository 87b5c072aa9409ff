//! Task losses and uncertainty-weighted multi-task totals.
//!
//! Every loss exists twice: as a plain function over slices (used for
//! reporting and as a reference) and as a graph builder used in training.
//! Task weights are `alpha_i = exp(-s_i) / 2` for learnable log-variances
//! `s_i = log sigma_i^2`; each active task contributes
//! `alpha_i * L_i + s_i / 2`, plus a quadratic penalty `lambda * s_i^2`.

use std::fmt;

use crate::error::{CaretsError, Result};
use crate::tape::{Graph, Matrix, Var};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

/// Log-variances are projected into `[-LOG_VAR_BOUND, LOG_VAR_BOUND]` after every step.
pub const LOG_VAR_BOUND: f64 = 10.0;

pub const DEFAULT_REG_COEFF: f64 = 0.01;

/// Which tasks the total combines: `A` = {ca, de, op}, `B` = {ca, op}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arch {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Ca,
    De,
    Op,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Ca => "l_ca",
            Task::De => "l_de",
            Task::Op => "l_op",
        }
    }
}

impl Arch {
    pub fn tasks(self) -> &'static [Task] {
        match self {
            Arch::A => &[Task::Ca, Task::De, Task::Op],
            Arch::B => &[Task::Ca, Task::Op],
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::A => "a",
            Arch::B => "b",
        })
    }
}

/// Learnable log-variances, initialised to 0 (every weight starts at 1/2).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UncertaintyState {
    pub log_var_ca: f64,
    pub log_var_de: f64,
    pub log_var_op: f64,
}

impl UncertaintyState {
    pub fn get(&self, task: Task) -> f64 {
        match task {
            Task::Ca => self.log_var_ca,
            Task::De => self.log_var_de,
            Task::Op => self.log_var_op,
        }
    }

    pub fn set(&mut self, task: Task, value: f64) {
        match task {
            Task::Ca => self.log_var_ca = value,
            Task::De => self.log_var_de = value,
            Task::Op => self.log_var_op = value,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.log_var_ca, self.log_var_de, self.log_var_op]
    }

    pub fn within_bounds(&self) -> bool {
        self.as_array()
            .iter()
            .all(|v| (-LOG_VAR_BOUND..=LOG_VAR_BOUND).contains(v))
    }
}

/// `alpha = exp(-log_var) / 2`.
pub fn task_weight(log_var: f64) -> f64 {
    0.5 * (-log_var).exp()
}

/// Projects every log-variance into the allowed range.
pub fn clamp_state(state: UncertaintyState) -> UncertaintyState {
    let c = |v: f64| v.clamp(-LOG_VAR_BOUND, LOG_VAR_BOUND);
    UncertaintyState {
        log_var_ca: c(state.log_var_ca),
        log_var_de: c(state.log_var_de),
        log_var_op: c(state.log_var_op),
    }
}

/// Mean binary cross-entropy of `p` against 0/1 labels.
pub fn loss_bce(p: &[f64], t: &[u8]) -> f64 {
    let n = p.len().max(1) as f64;
    p.iter()
        .zip(t)
        .map(|(p, t)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            let t = f64::from(*t);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}

/// Mean categorical cross-entropy of `(p_up, p_down)` pairs against one-hot
/// `(t_up, t_down)` pairs.
pub fn loss_ce_pair(p: &[(f64, f64)], t: &[(f64, f64)]) -> f64 {
    let n = p.len().max(1) as f64;
    p.iter()
        .zip(t)
        .map(|((pu, pd), (tu, td))| {
            -(tu * pu.clamp(PROB_EPS, 1.0 - PROB_EPS).ln()
                + td * pd.clamp(PROB_EPS, 1.0 - PROB_EPS).ln())
        })
        .sum::<f64>()
        / n
}

fn check_len(name: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(CaretsError::Dimension(format!("{name}: lengths {a} and {b}")));
    }
    Ok(())
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(1) as f64;
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

/// Deviation loss for a single non-negative magnitude head.
pub fn loss_de_abs(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len("loss_de_abs", pred.len(), target.len())?;
    Ok(mse(pred, target))
}

/// Deviation loss where only the head matching the true direction is scored.
pub fn loss_de_directional(
    up_hat: &[f64],
    down_hat: &[f64],
    up: &[f64],
    down: &[f64],
    t: &[u8],
) -> Result<f64> {
    let k = t.len();
    for (name, len) in [("up_hat", up_hat.len()), ("down_hat", down_hat.len()), ("up", up.len()), ("down", down.len())] {
        check_len(name, len, k)?;
    }
    let n = k.max(1) as f64;
    Ok((0..k)
        .map(|i| {
            if t[i] == 1 {
                (up_hat[i] - up[i]).powi(2)
            } else {
                (down_hat[i] - down[i]).powi(2)
            }
        })
        .sum::<f64>()
        / n)
}

/// Output prediction loss.
pub fn loss_op(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len("loss_op", pred.len(), target.len())?;
    Ok(mse(pred, target))
}

/// Raw task losses feeding the weighted total; `de` is ignored for [`Arch::B`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TaskLosses {
    pub ca: f64,
    pub de: f64,
    pub op: f64,
}

impl TaskLosses {
    pub fn get(&self, task: Task) -> f64 {
        match task {
            Task::Ca => self.ca,
            Task::De => self.de,
            Task::Op => self.op,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub arch: Arch,
    pub l_ca: f64,
    /// `None` for architecture (b).
    pub l_de: Option<f64>,
    pub l_op: f64,
    pub weight_ca: f64,
    pub weight_de: Option<f64>,
    pub weight_op: f64,
    pub reg_penalty: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Re-evaluates the total from the recorded parts.
    pub fn recompute(&self, state: &UncertaintyState) -> f64 {
        let mut total = self.reg_penalty;
        for task in self.arch.tasks() {
            let l = match task {
                Task::Ca => self.l_ca,
                Task::De => self.l_de.unwrap_or(0.0),
                Task::Op => self.l_op,
            };
            let s = state.get(*task);
            total += task_weight(s) * l + 0.5 * s;
        }
        total
    }
}

/// One summand `exp(-s) L / 2 + s / 2` of the weighted objective.
pub fn uncertainty_summand(loss: f64, log_var: f64) -> f64 {
    0.5 * (-log_var).exp() * loss + 0.5 * log_var
}

/// `d/ds [exp(-s) L / 2 + s / 2 + lambda s^2]`.
pub fn summand_gradient(loss: f64, log_var: f64, reg_coeff: f64) -> f64 {
    -0.5 * (-log_var).exp() * loss + 0.5 + 2.0 * reg_coeff * log_var
}

pub fn total_loss(
    losses: &TaskLosses,
    state: &UncertaintyState,
    arch: Arch,
    reg_coeff: f64,
) -> Result<LossBreakdown> {
    for task in arch.tasks() {
        if !losses.get(*task).is_finite() {
            return Err(CaretsError::NonFinite(task.name().into()));
        }
    }
    let mut total = 0.0;
    let mut reg = 0.0;
    for task in arch.tasks() {
        let s = state.get(*task);
        total += uncertainty_summand(losses.get(*task), s);
        reg += reg_coeff * s * s;
    }
    let has_de = arch == Arch::A;
    Ok(LossBreakdown {
        arch,
        l_ca: losses.ca,
        l_de: has_de.then_some(losses.de),
        l_op: losses.op,
        weight_ca: task_weight(state.log_var_ca),
        weight_de: has_de.then(|| task_weight(state.log_var_de)),
        weight_op: task_weight(state.log_var_op),
        reg_penalty: reg,
        total: total + reg,
    })
}

/// Graph builders over `(batch, K)` matrices; each returns a `1 x 1` node
/// averaging over samples and steps.
pub mod graph {
    use super::*;

    pub fn bce(g: &mut Graph, p: Var, t: &Matrix) -> Var {
        let t_node = g.input(t.clone());
        let not_t = g.input(t.mapv(|v| 1.0 - v));
        let ln_p = g.clamped_ln(p, PROB_EPS, 1.0 - PROB_EPS);
        let q = g.affine(p, -1.0, 1.0);
        let ln_q = g.clamped_ln(q, PROB_EPS, 1.0 - PROB_EPS);
        let a = g.mul(t_node, ln_p);
        let b = g.mul(not_t, ln_q);
        let sum = g.add(a, b);
        let m = g.mean(sum);
        g.scale(m, -1.0)
    }

    /// `p` holds `[p_up | p_down]`; `t` holds 0/1 upward labels.
    pub fn ce_pair(g: &mut Graph, p: Var, t: &Matrix) -> Var {
        let k = t.ncols();
        let up = g.cols(p, 0, k);
        let down = g.cols(p, k, k);
        let t_up = g.input(t.clone());
        let t_down = g.input(t.mapv(|v| 1.0 - v));
        let ln_up = g.clamped_ln(up, PROB_EPS, 1.0 - PROB_EPS);
        let ln_down = g.clamped_ln(down, PROB_EPS, 1.0 - PROB_EPS);
        let a = g.mul(t_up, ln_up);
        let b = g.mul(t_down, ln_down);
        let sum = g.add(a, b);
        let m = g.mean(sum);
        g.scale(m, -1.0)
    }

    pub fn mse(g: &mut Graph, pred: Var, target: &Matrix) -> Var {
        let t = g.input(target.clone());
        let d = g.sub(pred, t);
        let sq = g.square(d);
        g.mean(sq)
    }

    /// The masks zero the non-selected head, so it receives no gradient.
    pub fn directional(
        g: &mut Graph,
        up_hat: Var,
        down_hat: Var,
        up: &Matrix,
        down: &Matrix,
        t: &Matrix,
    ) -> Var {
        let t_up = g.input(t.clone());
        let t_down = g.input(t.mapv(|v| 1.0 - v));
        let up_t = g.input(up.clone());
        let down_t = g.input(down.clone());
        let du = g.sub(up_hat, up_t);
        let du = g.square(du);
        let du = g.mul(t_up, du);
        let dd = g.sub(down_hat, down_t);
        let dd = g.square(dd);
        let dd = g.mul(t_down, dd);
        let sum = g.add(du, dd);
        g.mean(sum)
    }

    /// Weighted total over `(loss, log_var)` pairs; returns `(total, penalty)`.
    pub fn uncertainty_total(g: &mut Graph, terms: &[(Var, Var)], reg_coeff: f64) -> (Var, Var) {
        let mut total = g.constant_scalar(0.0);
        let mut penalty = g.constant_scalar(0.0);
        for (loss, log_var) in terms {
            let neg = g.scale(*log_var, -1.0);
            let precision = g.exp(neg);
            let weighted = g.mul(precision, *loss);
            let weighted = g.scale(weighted, 0.5);
            let half_s = g.scale(*log_var, 0.5);
            total = g.add(total, weighted);
            total = g.add(total, half_s);
            let sq = g.square(*log_var);
            let pen = g.scale(sq, reg_coeff);
            penalty = g.add(penalty, pen);
        }
        (g.add(total, penalty), penalty)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::central_difference;
    use ndarray::array;

    #[test]
    fn bce_examples() {
        assert!((loss_bce(&[0.5], &[1]) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(loss_bce(&[1.0 - PROB_EPS], &[1]) < 1e-6);
        assert!(loss_bce(&[1.0], &[1]) < 1e-6);
        assert!((loss_bce(&[0.9], &[1]) - 0.105_360_515_657_826_3).abs() < 1e-12);
    }

    #[test]
    fn ce_pair_examples() {
        assert!((loss_ce_pair(&[(0.5, 0.5)], &[(0.0, 1.0)]) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(loss_ce_pair(&[(1.0, 0.0)], &[(1.0, 0.0)]) < 1e-6);
        let got = loss_ce_pair(&[(0.731059, 0.268941)], &[(1.0, 0.0)]);
        assert!((got - 0.313262).abs() < 1e-6, "{got}");
    }

    #[test]
    fn regression_loss_examples() {
        assert_eq!(loss_de_abs(&[0.3, 0.1], &[0.3, 0.1]).unwrap(), 0.0);
        assert!((loss_de_abs(&[0.2], &[0.5]).unwrap() - 0.09).abs() < 1e-15);
        assert!(loss_de_abs(&[0.2], &[0.5, 0.1]).is_err());

        assert_eq!(loss_de_directional(&[0.4], &[9.0], &[0.4], &[0.0], &[1]).unwrap(), 0.0);
        let l = loss_de_directional(&[0.0], &[0.3], &[0.0], &[0.1], &[0]).unwrap();
        assert!((l - 0.04).abs() < 1e-15);
        assert!(loss_de_directional(&[0.0], &[0.3], &[0.0], &[0.1], &[0, 1]).is_err());

        assert_eq!(loss_op(&[1.0; 6], &[1.0; 6]).unwrap(), 0.0);
        let y = [0.5; 6];
        let yhat: Vec<f64> = y.iter().map(|v| v + 0.1).collect();
        assert!((loss_op(&yhat, &y).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn random_losses_match_scalar_loops() {
        let y = [0.1, 0.7, 0.4, 0.9, 0.35, 0.6];
        let yhat = [0.2, 0.5, 0.45, 0.8, 0.3, 0.9];
        let mut acc = 0.0;
        for k in 0..6 {
            acc += (yhat[k] - y[k]) * (yhat[k] - y[k]);
        }
        assert!((loss_op(&yhat, &y).unwrap() - acc / 6.0).abs() < 1e-15);

        let t = [1u8, 0, 0, 1];
        let (uh, dh, u, d): ([f64; 4], [f64; 4], [f64; 4], [f64; 4]) = ([0.3, 0.1, 0.2, 0.0], [0.5, 0.2, 0.6, 0.4], [0.25, 0.0, 0.0, 0.1], [0.0, 0.3, 0.4, 0.0]);
        let mut acc = 0.0;
        for k in 0..4 {
            acc += if t[k] == 1 { (uh[k] - u[k]).powi(2) } else { (dh[k] - d[k]).powi(2) };
        }
        assert!((loss_de_directional(&uh, &dh, &u, &d, &t).unwrap() - acc / 4.0).abs() < 1e-15);

        let a = [0.3, 0.8, 0.05];
        let b = [0.1, 0.9, 0.0];
        let mut acc = 0.0;
        for k in 0..3 {
            acc += (a[k] - b[k]) * (a[k] - b[k]);
        }
        assert!((loss_de_abs(&a, &b).unwrap() - acc / 3.0).abs() < 1e-15);
    }

    #[test]
    fn total_loss_examples() {
        let ones = TaskLosses { ca: 1.0, de: 1.0, op: 1.0 };
        let zero = UncertaintyState::default();
        assert!((total_loss(&ones, &zero, Arch::A, 0.0).unwrap().total - 1.5).abs() < 1e-15);
        let b = total_loss(&ones, &zero, Arch::B, 0.0).unwrap();
        assert!((b.total - 1.0).abs() < 1e-15);
        assert_eq!(b.l_de, None);

        let s = 2f64.ln();
        let one_summand = uncertainty_summand(1.0, s);
        assert!((one_summand - 0.596_573_590_279_972_6).abs() < 1e-12);

        let bad = TaskLosses { ca: f64::NAN, de: 0.0, op: 0.0 };
        match total_loss(&bad, &zero, Arch::A, 0.0) {
            Err(CaretsError::NonFinite(term)) => assert_eq!(term, "l_ca"),
            other => panic!("{other:?}"),
        }
        // l_de is not an input of arch (b)
        let only_de_bad = TaskLosses { ca: 0.1, de: f64::NAN, op: 0.2 };
        assert!(total_loss(&only_de_bad, &zero, Arch::B, 0.0).is_ok());
    }

    #[test]
    fn breakdown_recomputes() {
        let losses = TaskLosses { ca: 0.4, de: 0.02, op: 0.01 };
        let state = UncertaintyState { log_var_ca: 0.3, log_var_de: -2.0, log_var_op: -3.5 };
        let b = total_loss(&losses, &state, Arch::A, 0.01).unwrap();
        assert!((b.recompute(&state) - b.total).abs() < 1e-12);
    }

    #[test]
    fn weight_and_clamp_examples() {
        assert_eq!(task_weight(0.0), 0.5);
        assert!((task_weight(2f64.ln()) - 0.25).abs() < 1e-15);
        assert!((task_weight(-10.0) - 11_013.232_897_403_359).abs() < 1e-6);

        let c = clamp_state(UncertaintyState { log_var_ca: 12.0, log_var_de: -11.0, log_var_op: 3.0 });
        assert_eq!(c.as_array(), [10.0, -10.0, 3.0]);
    }

    #[test]
    fn summand_gradient_matches_difference_and_vanishes_at_log_loss() {
        for &(l, s, lambda) in &[(0.3, 0.1, 0.0), (2.0, -1.0, 0.01), (0.05, 4.0, 0.5)] {
            let numeric = central_difference(|x| uncertainty_summand(l, x) + lambda * x * x, s, 1e-5);
            let analytic = summand_gradient(l, s, lambda);
            assert!((numeric - analytic).abs() / analytic.abs().max(1e-12) < 1e-6);
        }
        for l in [0.01, 0.5, 3.0] {
            assert!(summand_gradient(l, f64::ln(l), 0.0).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_losses_match_plain_functions() {
        let p = array![[0.9, 0.2, 0.5], [0.3, 0.6, 0.99]];
        let t = array![[1.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        let mut g = Graph::new();
        let pv = g.input(p.clone());
        let bce = graph::bce(&mut g, pv, &t);
        let flat_p: Vec<f64> = p.iter().copied().collect();
        let flat_t: Vec<u8> = t.iter().map(|v| *v as u8).collect();
        assert!((g.scalar(bce) - loss_bce(&flat_p, &flat_t)).abs() < 1e-14);

        let pair = array![[0.7, 0.4, 0.3, 0.6]];
        let tk = array![[1.0, 0.0]];
        let pv = g.input(pair);
        let ce = graph::ce_pair(&mut g, pv, &tk);
        let expected = loss_ce_pair(&[(0.7, 0.3), (0.4, 0.6)], &[(1.0, 0.0), (0.0, 1.0)]);
        assert!((g.scalar(ce) - expected).abs() < 1e-14);

        let losses = TaskLosses { ca: 0.6, de: 0.03, op: 0.02 };
        let state = UncertaintyState { log_var_ca: 0.5, log_var_de: -1.0, log_var_op: -2.0 };
        let terms: Vec<(Var, Var)> = Arch::A
            .tasks()
            .iter()
            .map(|t| (g.constant_scalar(losses.get(*t)), g.constant_scalar(state.get(*t))))
            .collect();
        let (total, penalty) = graph::uncertainty_total(&mut g, &terms, 0.01);
        let reference = total_loss(&losses, &state, Arch::A, 0.01).unwrap();
        assert!((g.scalar(total) - reference.total).abs() < 1e-14);
        assert!((g.scalar(penalty) - reference.reg_penalty).abs() < 1e-14);
    }

    #[test]
    fn directional_mask_blocks_gradient() {
        let mut g = Graph::new();
        let up_hat = g.input(array![[0.2, 0.9]]);
        let down_hat = g.input(array![[0.7, 0.1]]);
        let loss = graph::directional(
            &mut g,
            up_hat,
            down_hat,
            &array![[0.1, 0.0]],
            &array![[0.0, 0.3]],
            &array![[1.0, 0.0]],
        );
        let grads = g.backward(loss);
        let gu = grads.wrt(up_hat, (1, 2));
        let gd = grads.wrt(down_hat, (1, 2));
        assert_eq!(gu[[0, 1]], 0.0);
        assert_eq!(gd[[0, 0]], 0.0);
        assert!(gu[[0, 0]] != 0.0 && gd[[0, 1]] != 0.0);
    }
}
