use crate::scalar::{axpy, sigmoid, Scalar};

use super::LstmError;

/// Hidden and cell state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

/// One LSTM step for a single sample.
///
/// `wx` is input-major `[input][4·hidden]`, `wh` is `[hidden][4·hidden]` and
/// `b` is `[4·hidden]`; each 4·hidden row holds the input, forget,
/// candidate and output gate pre-activations in that order.
pub fn cell_forward<T: Scalar>(
    x: &[T],
    state: &CellState<T>,
    wx: &[T],
    wh: &[T],
    b: &[T],
) -> Result<CellState<T>, LstmError> {
    let h = state.h.len();
    let g4 = 4 * h;
    if state.c.len() != h || b.len() != g4 || wh.len() != h * g4 {
        return Err(LstmError::Invalid("state/weight shapes disagree".into()));
    }
    if wx.len() != x.len() * g4 {
        return Err(LstmError::Width { expected: wx.len() / g4, found: x.len() });
    }
    let mut z = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        axpy(xi, &wx[i * g4..(i + 1) * g4], &mut z);
    }
    for (j, &hj) in state.h.iter().enumerate() {
        axpy(hj, &wh[j * g4..(j + 1) * g4], &mut z);
    }
    let mut out = CellState { h: vec![T::zero(); h], c: vec![T::zero(); h] };
    for k in 0..h {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[h + k]);
        let g = z[2 * h + k].tanh();
        let o = sigmoid(z[3 * h + k]);
        out.c[k] = f * state.c[k] + i * g;
        out.h[k] = o * out.c[k].tanh();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_halve_the_cell() {
        let h = 3;
        let s: CellState<f64> = CellState { h: vec![0.2, -0.1, 0.7], c: vec![1.0, -2.0, 0.5] };
        let out = cell_forward(&[1.0, 2.0], &s, &vec![0.0; 2 * 4 * h], &vec![0.0; h * 4 * h], &vec![0.0; 4 * h]).unwrap();
        for k in 0..h {
            assert!((out.c[k] - 0.5 * s.c[k]).abs() < 1e-15);
            assert!((out.h[k] - 0.5 * (0.5 * s.c[k]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_forget_gate_retains_memory() {
        let h = 2;
        let mut b = vec![0.0; 4 * h];
        b[..h].iter_mut().for_each(|x| *x = -50.0);
        b[h..2 * h].iter_mut().for_each(|x| *x = 50.0);
        let s: CellState<f64> = CellState { h: vec![0.3, 0.4], c: vec![1.5, -0.25] };
        let out = cell_forward(&[0.9], &s, &vec![0.1; 4 * h], &vec![0.1; h * 4 * h], &b).unwrap();
        for k in 0..h {
            assert!((out.c[k] - s.c[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_width_is_rejected() {
        let s = CellState { h: vec![0.0; 2], c: vec![0.0; 2] };
        assert!(cell_forward(&[1.0, 2.0, 3.0], &s, &[0.0; 16], &[0.0; 16], &[0.0; 8]).is_err());
    }
}
