use super::{ParameterStore, Tape, Var};

/// Absolute differences below this count as exact; central differences
/// cannot resolve smaller gradients at `h = 1e-5`.
pub const ABS_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst scalar.
    pub worst: Option<(String, usize)>,
    pub max_abs_err: f64,
    pub n_checked: usize,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compare reverse-mode gradients of the scalar `f` against central
/// differences with step `h`, for every scalar in `store`.
pub fn gradient_check(store: &mut ParameterStore, h: f64, f: &dyn Fn(&mut Tape<'_>) -> Var) -> GradCheck {
    let grads = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape);
        tape.backward(loss)
    };
    let eval = |s: &ParameterStore| {
        let mut tape = Tape::new(s);
        let l = f(&mut tape);
        tape.value(l).item()
    };
    let mut out = GradCheck { max_rel_err: 0.0, worst: None, max_abs_err: 0.0, n_checked: 0 };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for k in 0..store.value(id).len() {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + h;
            let up = eval(store);
            store.value_mut(id).data_mut()[k] = orig - h;
            let down = eval(store);
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(id).data()[k];
            let err = if (numeric - analytic).abs() < ABS_FLOOR { 0.0 } else { rel_err(numeric, analytic) };
            out.n_checked += 1;
            out.max_abs_err = out.max_abs_err.max((numeric - analytic).abs());
            if err > out.max_rel_err || out.worst.is_none() {
                out.max_rel_err = err;
                out.worst = Some((store.name(id).to_string(), k));
            }
        }
    }
    out
}
