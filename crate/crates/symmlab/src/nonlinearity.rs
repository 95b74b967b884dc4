//! Piecewise-affine nonlinearities with jump discontinuities.
//!
//! The right-hand side `f` is stored as finitely many affine pieces
//! `a + b t` on `[t_i, t_{i+1})`, right continuous at breakpoints. This
//! covers the discontinuous, locally bounded class the solver targets while
//! keeping the antiderivative, the bounds and the structural hypothesis
//! checks exact (no quadrature enters this layer).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One affine piece, active on `[start, next_start)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Piece<R: Real> {
    pub start: R,
    /// Constant coefficient of `a + b t`.
    pub a: R,
    /// Linear coefficient of `a + b t`.
    pub b: R,
}

/// Nonnegative piecewise-affine nonlinearity on `[0, +inf)`, optionally
/// paired with a nonincreasing comparison function `phi` and exponent
/// margin `s` for the subcritical hypothesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Nonlinearity<R: Real = f64> {
    pieces: Vec<Piece<R>>,
    comparison: Option<Comparison<R>>,
}

/// Comparison pair `(phi, s)`: `phi` nonincreasing piecewise constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison<R: Real> {
    /// Steps `(start, value)`; values nonincreasing in `start`.
    pub phi: Vec<(R, R)>,
    pub s: R,
}

/// Bounds of `f` relative to a solution maximum `M`.
#[derive(Debug, Clone, Copy)]
pub struct FBounds<R: Real> {
    pub m_max: R,
    /// Infimum of `f` over `(0, M]`.
    pub m_f: R,
    /// Supremum of `f` over `[0, M]`.
    pub big_m_f: R,
}

/// Outcome of the structural hypothesis check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HypothesisVerdict {
    Pass,
    /// The comparison inequality failed at this `t`.
    Fail { t: f64, reason: String },
    /// `p < N` but no comparison pair is stored, so nothing can be certified.
    Incomplete,
}

impl<R: Real> Nonlinearity<R> {
    /// Build from pieces; validates ordering and nonnegativity of `f` on
    /// the closure of every piece.
    pub fn new(pieces: Vec<Piece<R>>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Nonlinearity("no pieces".into()));
        }
        if pieces[0].start != R::zero() {
            return Err(Error::Nonlinearity("first piece must start at 0".into()));
        }
        for w in pieces.windows(2) {
            if w[1].start <= w[0].start {
                return Err(Error::Nonlinearity("breakpoints must increase".into()));
            }
            let end = w[1].start;
            if w[0].a < R::zero() || w[0].a + w[0].b * end < R::zero() {
                return Err(Error::Nonlinearity("f must be nonnegative".into()));
            }
        }
        let last = pieces[pieces.len() - 1];
        if last.a < R::zero() || last.b < R::zero() {
            // Affine tail on an unbounded interval must not go negative.
            if last.b < R::zero() {
                return Err(Error::Nonlinearity(
                    "f must stay nonnegative on the unbounded tail".into(),
                ));
            }
            return Err(Error::Nonlinearity("f must be nonnegative".into()));
        }
        Ok(Nonlinearity {
            pieces,
            comparison: None,
        })
    }

    pub fn constant(c: R) -> Result<Self> {
        Self::new(vec![Piece {
            start: R::zero(),
            a: c,
            b: R::zero(),
        }])
    }

    pub fn affine(a: R, b: R) -> Result<Self> {
        Self::new(vec![Piece {
            start: R::zero(),
            a,
            b,
        }])
    }

    /// Piecewise-constant steps `(start, value)`, first start must be 0.
    pub fn step(levels: &[(R, R)]) -> Result<Self> {
        Self::new(
            levels
                .iter()
                .map(|&(start, value)| Piece {
                    start,
                    a: value,
                    b: R::zero(),
                })
                .collect(),
        )
    }

    pub fn with_comparison(mut self, phi: Vec<(R, R)>, s: R) -> Result<Self> {
        if s <= R::zero() {
            return Err(Error::Nonlinearity("comparison s must be positive".into()));
        }
        if phi.is_empty() || phi[0].0 != R::zero() {
            return Err(Error::Nonlinearity("phi must start at 0".into()));
        }
        for w in phi.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Nonlinearity("phi breakpoints must increase".into()));
            }
            if w[1].1 > w[0].1 {
                return Err(Error::Nonlinearity("phi must be nonincreasing".into()));
            }
        }
        if phi.iter().any(|&(_, v)| v < R::zero()) {
            return Err(Error::Nonlinearity("phi must be nonnegative".into()));
        }
        self.comparison = Some(Comparison { phi, s });
        Ok(self)
    }

    pub fn comparison(&self) -> Option<&Comparison<R>> {
        self.comparison.as_ref()
    }

    pub fn pieces(&self) -> &[Piece<R>] {
        &self.pieces
    }

    /// Interior breakpoints of `f` (excluding 0).
    pub fn breakpoints(&self) -> impl Iterator<Item = R> + '_ {
        self.pieces.iter().skip(1).map(|p| p.start)
    }

    fn piece_index(&self, t: R) -> usize {
        // Right-continuity: t belongs to the piece whose start <= t.
        match self
            .pieces
            .binary_search_by(|p| p.start.partial_cmp(&t).expect("finite breakpoint"))
        {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    /// Evaluate `f(t)`; at breakpoints this takes the right-limit value.
    /// Negative arguments clamp to 0 (f lives on `[0, inf)`).
    pub fn eval(&self, t: R) -> R {
        let t = t.max(R::zero());
        let p = self.pieces[self.piece_index(t)];
        p.a + p.b * t
    }

    /// Left limit `f(t-)`; equals `eval` except exactly at breakpoints.
    pub fn eval_left(&self, t: R) -> R {
        let t = t.max(R::zero());
        let i = self.piece_index(t);
        if i > 0 && self.pieces[i].start == t {
            let p = self.pieces[i - 1];
            p.a + p.b * t
        } else {
            let p = self.pieces[i];
            p.a + p.b * t
        }
    }

    /// Antiderivative `F(t) = int_0^t f`, exact piecewise-quadratic
    /// accumulation; continuous and nondecreasing even across jumps.
    pub fn antiderivative(&self, t: R) -> R {
        let t = t.max(R::zero());
        let mut acc = R::zero();
        for (i, p) in self.pieces.iter().enumerate() {
            if p.start >= t {
                break;
            }
            let end = if i + 1 < self.pieces.len() {
                self.pieces[i + 1].start.min(t)
            } else {
                t
            };
            acc += p.a * (end - p.start) + p.b * (end * end - p.start * p.start) * R::half();
        }
        acc
    }

    /// Exact infimum of `f` over `(0, M]` and supremum over `[0, M]`.
    ///
    /// Errors when the infimum is not strictly positive, which violates the
    /// standing hypothesis on `f`.
    pub fn bounds(&self, m_max: R) -> Result<FBounds<R>> {
        if m_max <= R::zero() {
            return Err(Error::Nonlinearity("bounds need M > 0".into()));
        }
        let (inf, sup) = self.inf_sup(m_max);
        if inf <= R::zero() {
            return Err(Error::Hypothesis(format!(
                "m_f = {inf} <= 0 on (0, {m_max}]; the deficit theory requires m_f > 0"
            )));
        }
        Ok(FBounds {
            m_max,
            m_f: inf,
            big_m_f: sup,
        })
    }

    /// Infimum over `(0, M]` and supremum over `[0, M]` without the
    /// positivity gate.
    pub fn inf_sup(&self, m_max: R) -> (R, R) {
        let mut inf = R::infinity();
        let mut sup = R::neg_infinity();
        for (i, p) in self.pieces.iter().enumerate() {
            if p.start > m_max {
                break;
            }
            let end = if i + 1 < self.pieces.len() {
                self.pieces[i + 1].start.min(m_max)
            } else {
                m_max
            };
            // Affine on [start, end]: extremes at the endpoints. The left
            // endpoint value is the right limit there, which is also the
            // infimum over the open side.
            let v0 = p.a + p.b * p.start;
            let v1 = p.a + p.b * end;
            inf = inf.min(v0).min(v1);
            sup = sup.max(v0).max(v1);
        }
        (inf, sup)
    }

    /// Cheap pre-solve check that `f` stays positive near 0: the infimum of
    /// `f` over `(0, M]` can only decrease as `M` grows, so a failure here
    /// is a definite hypothesis violation before any PDE work.
    pub fn positive_near_zero(&self) -> Result<()> {
        let probe = if self.pieces.len() > 1 {
            self.pieces[1].start
        } else {
            R::one()
        };
        let (inf, _) = self.inf_sup(probe);
        if inf <= R::zero() {
            return Err(Error::Hypothesis(format!(
                "m_f = {inf} <= 0 already on (0, {probe}]"
            )));
        }
        Ok(())
    }

    /// Check the structural hypotheses for exponent `p` in dimension `n`:
    /// `p >= N` passes outright; for `p < N` the stored pair `(phi, s)`
    /// must satisfy `phi <= f <= ((Np - s)/(N - p)) phi` on `[0, M]`.
    ///
    /// Both functions are piecewise with finitely many breakpoints, so
    /// checking one-sided values at every breakpoint and at the endpoints
    /// is exhaustive.
    pub fn check_hypotheses(&self, p: R, n: usize, m_max: R) -> HypothesisVerdict {
        let nn = R::of(n as f64);
        if p >= nn {
            return HypothesisVerdict::Pass;
        }
        let Some(cmp) = &self.comparison else {
            return HypothesisVerdict::Incomplete;
        };
        let ratio = (nn * p - cmp.s) / (nn - p);
        if ratio <= R::zero() {
            return HypothesisVerdict::Fail {
                t: 0.0,
                reason: format!("(Np - s)/(N - p) = {ratio} is not positive"),
            };
        }
        let phi_eval = |t: R| -> R {
            let mut v = cmp.phi[0].1;
            for &(start, value) in &cmp.phi {
                if start <= t {
                    v = value;
                } else {
                    break;
                }
            }
            v
        };
        let phi_left = |t: R| -> R {
            let mut v = cmp.phi[0].1;
            for &(start, value) in &cmp.phi {
                if start < t {
                    v = value;
                } else {
                    break;
                }
            }
            v
        };
        let mut grid: Vec<R> = vec![R::zero(), m_max];
        grid.extend(self.breakpoints().filter(|&t| t < m_max));
        grid.extend(
            cmp.phi
                .iter()
                .skip(1)
                .map(|&(s, _)| s)
                .filter(|&t| t < m_max),
        );
        grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
        grid.dedup();
        for &t in &grid {
            for (f_v, phi_v) in [
                (self.eval(t), phi_eval(t)),
                (self.eval_left(t), phi_left(t)),
            ] {
                if f_v < phi_v {
                    return HypothesisVerdict::Fail {
                        t: t.to_f64().unwrap_or(f64::NAN),
                        reason: format!("f(t) = {f_v} < phi(t) = {phi_v}"),
                    };
                }
                if f_v > ratio * phi_v {
                    return HypothesisVerdict::Fail {
                        t: t.to_f64().unwrap_or(f64::NAN),
                        reason: format!(
                            "f(t) = {f_v} > ((Np - s)/(N - p)) phi(t) = {}",
                            ratio * phi_v
                        ),
                    };
                }
            }
        }
        HypothesisVerdict::Pass
    }
}

/// Constant `sigma` of the sup-norm comparison bound:
/// `1 + p/(N(p-1))` for `p >= N`, `s/(N(p-1))` for `1 < p < N` (requires `s`).
pub fn sigma<R: Real>(p: R, n: usize, s: Option<R>) -> Result<R> {
    if p <= R::one() {
        return Err(Error::Nonlinearity("sigma needs p > 1".into()));
    }
    let nn = R::of(n as f64);
    let denom = nn * (p - R::one());
    if p >= nn {
        Ok(R::one() + p / denom)
    } else {
        let s = s.ok_or_else(|| {
            Error::Nonlinearity("sigma with p < N requires the comparison exponent s".into())
        })?;
        if s <= R::zero() {
            return Err(Error::Nonlinearity("s must be positive".into()));
        }
        Ok(s / denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_2_1() -> Nonlinearity<f64> {
        // 2 on [0, 1), 1 on [1, inf)
        Nonlinearity::step(&[(0.0, 2.0), (1.0, 1.0)]).unwrap()
    }

    #[test]
    fn eval_constant_and_affine() {
        let f = Nonlinearity::constant(1.0).unwrap();
        assert_eq!(f.eval(0.7), 1.0);
        let g = Nonlinearity::affine(1.0, 1.0).unwrap();
        assert_eq!(g.eval(0.5), 1.5);
    }

    #[test]
    fn step_takes_right_limit_at_breakpoint() {
        let f = step_2_1();
        assert_eq!(f.eval(1.0), 1.0);
        assert_eq!(f.eval_left(1.0), 2.0);
        assert_eq!(f.eval(0.999), 2.0);
    }

    #[test]
    fn antiderivative_exact_values() {
        let f = Nonlinearity::constant(1.0).unwrap();
        assert_eq!(f.antiderivative(0.3), 0.3);
        let g = step_2_1();
        assert!((g.antiderivative(1.5) - 2.5).abs() < 1e-15);
        let h = Nonlinearity::affine(1.0, 1.0).unwrap();
        assert!((h.antiderivative(2.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn bounds_examples() {
        let f = Nonlinearity::constant(1.0).unwrap();
        let b = f.bounds(0.25).unwrap();
        assert_eq!((b.m_f, b.big_m_f), (1.0, 1.0));

        let g = step_2_1();
        let b = g.bounds(1.5).unwrap();
        assert_eq!((b.m_f, b.big_m_f), (1.0, 2.0));

        let h = Nonlinearity::affine(0.0, 1.0).unwrap();
        assert!(matches!(h.bounds(1.0), Err(Error::Hypothesis(_))));
        assert!(h.positive_near_zero().is_err());
    }

    #[test]
    fn hypothesis_check_branches() {
        let f = Nonlinearity::constant(1.0).unwrap();
        assert_eq!(f.check_hypotheses(2.0, 2, 1.0), HypothesisVerdict::Pass);

        let with_phi = Nonlinearity::constant(1.0)
            .unwrap()
            .with_comparison(vec![(0.0, 1.0)], 1.0)
            .unwrap();
        // 1 <= (2*1.5 - 1)/(2 - 1.5) = 4 holds
        assert_eq!(
            with_phi.check_hypotheses(1.5, 2, 1.0),
            HypothesisVerdict::Pass
        );

        assert_eq!(
            f.check_hypotheses(1.5, 2, 1.0),
            HypothesisVerdict::Incomplete
        );

        // phi too large: f < phi fails
        let bad = Nonlinearity::constant(1.0)
            .unwrap()
            .with_comparison(vec![(0.0, 2.0)], 1.0)
            .unwrap();
        assert!(matches!(
            bad.check_hypotheses(1.5, 2, 1.0),
            HypothesisVerdict::Fail { .. }
        ));
    }

    #[test]
    fn sigma_values_match_closed_form() {
        assert!((sigma::<f64>(2.0, 2, None).unwrap() - 2.0).abs() < 1e-15);
        assert!((sigma::<f64>(1.5, 2, Some(1.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((sigma::<f64>(3.0, 2, None).unwrap() - 1.75).abs() < 1e-15);
        assert!(sigma::<f64>(1.5, 2, None).is_err());
    }

    #[test]
    fn sigma_positive_whenever_defined() {
        for &(p, n, s) in &[
            (1.2, 2, Some(0.5)),
            (1.9, 2, Some(2.0)),
            (2.0, 2, None),
            (4.0, 3, None),
            (2.5, 3, Some(1.0)),
        ] {
            let v = sigma::<f64>(p, n, s).unwrap();
            assert!(v > 0.0, "sigma({p}, {n}, {s:?}) = {v}");
        }
    }

    #[test]
    fn rejects_negative_nonlinearity() {
        assert!(Nonlinearity::new(vec![Piece {
            start: 0.0,
            a: 1.0,
            b: -2.0,
        }])
        .is_err());
        assert!(Nonlinearity::step(&[(0.0, 1.0), (1.0, -0.5)]).is_err());
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    fn arbitrary_nl() -> impl Strategy<Value = Nonlinearity<f64>> {
        // 1..4 pieces with positive values at controlled slopes
        prop::collection::vec((0.1f64..3.0, -0.5f64..1.0), 1..4).prop_map(|specs| {
            let mut pieces = Vec::new();
            let mut start = 0.0;
            for (a, b) in specs {
                // keep the piece nonnegative on [start, start + 1]
                let b = if a + b * (start + 1.0) < 0.0 { 0.0 } else { b };
                pieces.push(Piece { start, a, b });
                start += 1.0;
            }
            // nonnegative tail
            if let Some(last) = pieces.last_mut() {
                if last.b < 0.0 {
                    last.b = 0.0;
                }
            }
            Nonlinearity::new(pieces).unwrap()
        })
    }

    proptest! {
        #[test]
        fn antiderivative_increment_bounded_by_inf_sup(nl in arbitrary_nl(),
                                                       t1 in 0.0f64..2.5,
                                                       dt in 1e-6f64..1.0) {
            let t2 = t1 + dt;
            let df = nl.antiderivative(t2) - nl.antiderivative(t1);
            // inf/sup of f over [t1, t2]
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut grid = vec![t1, t2];
            grid.extend(nl.breakpoints().filter(|&t| t > t1 && t < t2));
            for &t in &grid {
                lo = lo.min(nl.eval(t)).min(nl.eval_left(t));
                hi = hi.max(nl.eval(t)).max(nl.eval_left(t));
            }
            prop_assert!(df >= lo * dt - 1e-12 - 1e-12 * hi);
            prop_assert!(df <= hi * dt + 1e-12 + 1e-12 * hi);
        }

        #[test]
        fn bounds_enclose_dense_grid(nl in arbitrary_nl(), m in 0.1f64..3.0) {
            let (inf, sup) = nl.inf_sup(m);
            for i in 1..=1000 {
                let t = m * (i as f64) / 1000.0;
                let v = nl.eval(t);
                prop_assert!(v >= inf - 1e-12, "f({t}) = {v} below inf {inf}");
                prop_assert!(v <= sup + 1e-12, "f({t}) = {v} above sup {sup}");
            }
        }
    }
}
