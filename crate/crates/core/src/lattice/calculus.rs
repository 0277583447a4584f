//! Exact discrete calculus identities, evaluated term by term so that each
//! residual can be compared against the rounding scale of its terms.
//!
//! Chain rules are checked for β(u) = u², where β'' ≡ 2 and every
//! intermediate-value point drops out, so both sides are explicit.

use super::{
    backward_diff, convolve, dual_upwind_apply, dual_upwind_one, forward_diff, second_diff,
    upwind_apply, GridFunction, VectorGridFunction,
};

#[derive(Clone, Debug, PartialEq)]
pub struct IdentityResidual {
    pub name: String,
    /// max_α |Σ terms| / max_α Σ |terms|.
    pub relative: f64,
    pub absolute: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CalculusReport {
    pub residuals: Vec<IdentityResidual>,
}

impl CalculusReport {
    pub fn max_relative(&self) -> f64 {
        self.residuals.iter().map(|r| r.relative).fold(0.0, f64::max)
    }

    fn push_pointwise(&mut self, name: String, terms: &[(f64, &GridFunction)]) {
        let n = terms[0].1.len();
        let mut abs = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..n {
            let mut s = 0.0;
            let mut m = 0.0;
            for (c, t) in terms {
                let v = c * t.values()[i];
                s += v;
                m += v.abs();
            }
            abs = abs.max(s.abs());
            scale = scale.max(m);
        }
        self.push(name, abs, scale);
    }

    fn push_sums(&mut self, name: String, terms: &[(f64, &GridFunction, &GridFunction)]) {
        let mut s = 0.0;
        let mut m = 0.0;
        for (c, a, b) in terms {
            for (x, y) in a.values().iter().zip(b.values()) {
                s += c * x * y;
                m += (c * x * y).abs();
            }
        }
        self.push(name, s.abs(), m);
    }

    fn push(&mut self, name: String, absolute: f64, scale: f64) {
        let relative = if scale > 0.0 { absolute / scale } else { absolute };
        self.residuals.push(IdentityResidual { name, relative, absolute });
    }
}

/// Evaluates the product rules, the upwind product rule, differences of
/// convolutions, both summation-by-parts rules, and the chain rules with
/// β(u) = u², in every direction.
///
/// Inputs must vanish near the box boundary (zero-exterior lattice), and the
/// convolution identity additionally needs f and g supported within half the
/// radius.
pub fn calculus_identity_suite(
    f: &GridFunction,
    g: &GridFunction,
    v: &VectorGridFunction,
) -> CalculusReport {
    let spec = f.spec().clone();
    spec.ensure_same(g.spec()).expect("f and g on different lattices");
    spec.ensure_same(v.spec()).expect("f and V on different lattices");
    let dx = spec.dx();
    let mut rep = CalculusReport::default();
    let fg = f.mul(g);
    let f_sq = f.mul(f);
    let conv = convolve(f, g);

    for j in 0..spec.dim() {
        let fp = forward_diff(f, j);
        let fm = backward_diff(f, j);
        let gp = forward_diff(g, j);
        let gm = backward_diff(g, j);
        let f_up = GridFunction::from_raw(
            spec.clone(),
            (0..spec.len()).map(|i| f.shifted(i, j, 1)).collect(),
        );
        let f_dn = GridFunction::from_raw(
            spec.clone(),
            (0..spec.len()).map(|i| f.shifted(i, j, -1)).collect(),
        );

        // (i) ∇±(fg) = f_{α±e} ∇± g + g ∇± f
        rep.push_pointwise(
            format!("product_rule_plus[{j}]"),
            &[(1.0, &forward_diff(&fg, j)), (-1.0, &f_up.mul(&gp)), (-1.0, &g.mul(&fp))],
        );
        rep.push_pointwise(
            format!("product_rule_minus[{j}]"),
            &[(1.0, &backward_diff(&fg, j)), (-1.0, &f_dn.mul(&gm)), (-1.0, &g.mul(&fm))],
        );

        // (iii) ∇±(f⊛g) = (∇±f)⊛g = f⊛(∇±g)
        for (tag, lhs, a, b) in [
            ("plus", forward_diff(&conv, j), convolve(&fp, g), convolve(f, &gp)),
            ("minus", backward_diff(&conv, j), convolve(&fm, g), convolve(f, &gm)),
        ] {
            rep.push_pointwise(format!("convolution_left_{tag}[{j}]"), &[(1.0, &lhs), (-1.0, &a)]);
            rep.push_pointwise(format!("convolution_right_{tag}[{j}]"), &[(1.0, &lhs), (-1.0, &b)]);
        }

        // (iv) Σ f ∇± g = −Σ g ∇∓ f
        rep.push_sums(format!("summation_by_parts_plus[{j}]"), &[(1.0, f, &gp), (1.0, g, &fm)]);
        rep.push_sums(format!("summation_by_parts_minus[{j}]"), &[(1.0, f, &gm), (1.0, g, &fp)]);

        // (vi) chain rules for β(u) = u²
        let fp_sq = fp.mul(&fp);
        let fm_sq = fm.mul(&fm);
        rep.push_pointwise(
            format!("chain_rule_plus[{j}]"),
            &[(1.0, &forward_diff(&f_sq, j)), (-2.0, &f.mul(&fp)), (-dx, &fp_sq)],
        );
        rep.push_pointwise(
            format!("chain_rule_minus[{j}]"),
            &[(1.0, &backward_diff(&f_sq, j)), (-2.0, &f.mul(&fm)), (dx, &fm_sq)],
        );
        // β'(f)∇−∇+f − ∇−∇+β(f) = −½β''|∇+f|² − ½β''|∇−f|²
        rep.push_pointwise(
            format!("second_order_commutator[{j}]"),
            &[
                (2.0, &f.mul(&second_diff(f, j))),
                (-1.0, &second_diff(&f_sq, j)),
                (1.0, &fp_sq),
                (1.0, &fm_sq),
            ],
        );
    }

    // (ii) D'_V g = g D'_V(1) + Σ_j [(g_{α+e}−g_α)V^{j,+}_{α+e} − (g_α−g_{α−e})V^{j,−}_{α−e}]/Δx
    let mut flux = vec![0.0; spec.len()];
    for j in 0..spec.dim() {
        let vj = v.component(j);
        for (i, o) in flux.iter_mut().enumerate() {
            let vp_up = vj.shifted(i, j, 1).max(0.0);
            let vm_dn = (-vj.shifted(i, j, -1)).max(0.0);
            let gi = g.values()[i];
            *o += ((g.shifted(i, j, 1) - gi) * vp_up - (gi - g.shifted(i, j, -1)) * vm_dn) / dx;
        }
    }
    let flux = GridFunction::from_raw(spec.clone(), flux);
    rep.push_pointwise(
        "upwind_product_rule".into(),
        &[(1.0, &dual_upwind_apply(v, g)), (-1.0, &g.mul(&dual_upwind_one(v))), (-1.0, &flux)],
    );

    // (v) Σ g D_V f = −Σ f D'_V g
    rep.push_sums(
        "upwind_summation_by_parts".into(),
        &[(1.0, g, &upwind_apply(v, f)), (1.0, f, &dual_upwind_apply(v, g))],
    );

    // (vii) β'(f) D_V f − D_V β(f) = Σ_j [V^{j,+}(f_{α−e}−f_α)² + V^{j,−}(f_{α+e}−f_α)²]/Δx
    let mut quad = vec![0.0; spec.len()];
    for j in 0..spec.dim() {
        let vj = v.component(j);
        for (i, o) in quad.iter_mut().enumerate() {
            let fi = f.values()[i];
            let vji = vj.values()[i];
            let dn = f.shifted(i, j, -1) - fi;
            let up = f.shifted(i, j, 1) - fi;
            *o += (vji.max(0.0) * dn * dn + (-vji).max(0.0) * up * up) / dx;
        }
    }
    let quad = GridFunction::from_raw(spec.clone(), quad);
    rep.push_pointwise(
        "upwind_chain_rule".into(),
        &[(2.0, &f.mul(&upwind_apply(v, f))), (-1.0, &upwind_apply(v, &f_sq)), (-1.0, &quad)],
    );
    rep
}
