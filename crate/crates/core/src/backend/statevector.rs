use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::circuit::{BoundGate, GateKind};
use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliString};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// `2^n` complex amplitudes; qubit 0 is the least-significant index bit.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Self { n_qubits, amps }
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1 << n_qubits {
            return Err(Error::Dimension(format!(
                "{} amplitudes for {n_qubits} qubits",
                amps.len()
            )));
        }
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rescales to unit norm and returns the previous norm.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            self.amps.iter_mut().for_each(|a| *a *= inv);
        }
        n
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: Complex64, other: &StateVector) {
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: Complex64) {
        self.amps.iter_mut().for_each(|a| *a *= c);
    }

    pub fn apply_gate(&mut self, g: &BoundGate) {
        let qs = g.qubits();
        let half = 0.5 * g.angle;
        match g.kind {
            GateKind::Rx => {
                let (s, c) = half.sin_cos();
                self.apply_1q(qs[0], [c.into(), -I * s, -I * s, c.into()]);
            }
            GateKind::Ry => {
                let (s, c) = half.sin_cos();
                self.apply_1q(qs[0], [c.into(), (-s).into(), s.into(), c.into()]);
            }
            GateKind::Rz => {
                let p = Complex64::from_polar(1.0, half);
                self.apply_diag(qs[0], p.conj(), p);
            }
            GateKind::Rzz => {
                let p = Complex64::from_polar(1.0, half);
                self.apply_zz_phase(qs[0], qs[1], p.conj(), p);
            }
            GateKind::H => {
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                self.apply_1q(qs[0], [h, h, h, -h]);
            }
            GateKind::X => self.apply_x(qs[0]),
            GateKind::Y => self.apply_1q(qs[0], [ZERO, -I, I, ZERO]),
            GateKind::Z => self.apply_diag(qs[0], ONE, -ONE),
            GateKind::S => self.apply_diag(qs[0], ONE, I),
            GateKind::Sdg => self.apply_diag(qs[0], ONE, -I),
            GateKind::Cx => self.apply_cx(qs[0], qs[1]),
        }
    }

    pub fn apply_gates<'a>(&mut self, gates: impl IntoIterator<Item = &'a BoundGate>) {
        for g in gates {
            self.apply_gate(g);
        }
    }

    /// Row-major 2x2 matrix `[a, b, c, d]` on qubit `q`.
    pub fn apply_1q(&mut self, q: usize, m: [Complex64; 4]) {
        let stride = 1usize << q;
        for block in (0..self.amps.len()).step_by(2 * stride) {
            for i in block..block + stride {
                let x = self.amps[i];
                let y = self.amps[i + stride];
                self.amps[i] = m[0] * x + m[1] * y;
                self.amps[i + stride] = m[2] * x + m[3] * y;
            }
        }
    }

    fn apply_diag(&mut self, q: usize, d0: Complex64, d1: Complex64) {
        let bit = 1usize << q;
        for (k, a) in self.amps.iter_mut().enumerate() {
            *a *= if k & bit == 0 { d0 } else { d1 };
        }
    }

    fn apply_zz_phase(&mut self, q0: usize, q1: usize, even: Complex64, odd: Complex64) {
        for (k, a) in self.amps.iter_mut().enumerate() {
            let parity = (k >> q0 ^ k >> q1) & 1;
            *a *= if parity == 0 { even } else { odd };
        }
    }

    fn apply_x(&mut self, q: usize) {
        let stride = 1usize << q;
        for block in (0..self.amps.len()).step_by(2 * stride) {
            for i in block..block + stride {
                self.amps.swap(i, i + stride);
            }
        }
    }

    fn apply_cx(&mut self, control: usize, target: usize) {
        let c = 1usize << control;
        let t = 1usize << target;
        for k in 0..self.amps.len() {
            if k & c != 0 && k & t == 0 {
                self.amps.swap(k, k | t);
            }
        }
    }

    pub fn apply_pauli(&mut self, q: usize, p: Pauli) {
        match p {
            Pauli::I => {}
            Pauli::X => self.apply_x(q),
            Pauli::Y => self.apply_1q(q, [ZERO, -I, I, ZERO]),
            Pauli::Z => self.apply_diag(q, ONE, -ONE),
        }
    }

    pub fn apply_pauli_string(&mut self, p: &PauliString) {
        let mut out = vec![ZERO; self.amps.len()];
        p.apply(&self.amps, &mut out);
        self.amps = out;
    }

    /// Multiplies by the rotation generator of `kind` on `qubits`
    /// (X, Y, Z or ZZ); used for derivative-state insertion.
    pub fn apply_generator(&mut self, kind: GateKind, qubits: &[usize]) -> Result<()> {
        match kind {
            GateKind::Rx => self.apply_pauli(qubits[0], Pauli::X),
            GateKind::Ry => self.apply_pauli(qubits[0], Pauli::Y),
            GateKind::Rz => self.apply_pauli(qubits[0], Pauli::Z),
            GateKind::Rzz => self.apply_zz_phase(qubits[0], qubits[1], ONE, -ONE),
            other => {
                return Err(Error::UnsupportedGradient(format!(
                    "{} has no rotation generator",
                    other.name()
                )))
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::BoundGate;
    use approx::assert_abs_diff_eq;

    fn gate(kind: GateKind, qs: &[usize], a: f64) -> BoundGate {
        BoundGate::new(kind, qs, a).unwrap()
    }

    fn run(n: usize, gates: &[BoundGate]) -> StateVector {
        let mut s = StateVector::zero(n);
        s.apply_gates(gates);
        s
    }

    fn same_up_to_phase(a: &StateVector, b: &StateVector) -> bool {
        (a.fidelity(b) - 1.0).abs() < 1e-12
    }

    #[test]
    fn ry_half_pi_on_zero() {
        let s = run(1, &[gate(GateKind::Ry, &[0], std::f64::consts::FRAC_PI_2)]);
        assert_abs_diff_eq!(s.amplitudes()[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].re, FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn clifford_point_identities() {
        use std::f64::consts::FRAC_PI_2;
        // every single-qubit identity checked on a generic input state
        let prep = [gate(GateKind::Ry, &[0], 0.7), gate(GateKind::Rz, &[0], -0.4)];
        let check = |lhs: &[BoundGate], rhs: &[BoundGate]| {
            let mut a = run(1, &prep);
            a.apply_gates(lhs);
            let mut b = run(1, &prep);
            b.apply_gates(rhs);
            assert!(same_up_to_phase(&a, &b));
        };
        // circuits list gates in application order, so X H means H first
        check(
            &[gate(GateKind::Ry, &[0], FRAC_PI_2)],
            &[gate(GateKind::H, &[0], 0.0), gate(GateKind::X, &[0], 0.0)],
        );
        check(
            &[gate(GateKind::Rx, &[0], FRAC_PI_2)],
            &[
                gate(GateKind::Sdg, &[0], 0.0),
                gate(GateKind::H, &[0], 0.0),
                gate(GateKind::Sdg, &[0], 0.0),
            ],
        );
        check(
            &[gate(GateKind::Rz, &[0], FRAC_PI_2)],
            &[
                gate(GateKind::H, &[0], 0.0),
                gate(GateKind::Rx, &[0], FRAC_PI_2),
                gate(GateKind::H, &[0], 0.0),
            ],
        );
    }

    #[test]
    fn cx_truth_table() {
        let mut s = StateVector::zero(2);
        s.apply_gate(&gate(GateKind::X, &[0], 0.0));
        s.apply_gate(&gate(GateKind::Cx, &[0, 1], 0.0));
        assert_abs_diff_eq!(s.amplitudes()[3].re, 1.0);
        let mut t = StateVector::zero(2);
        t.apply_gate(&gate(GateKind::X, &[1], 0.0));
        t.apply_gate(&gate(GateKind::Cx, &[0, 1], 0.0));
        assert_abs_diff_eq!(t.amplitudes()[2].re, 1.0);
    }

    #[test]
    fn rzz_matches_cx_rz_cx() {
        let prep = [
            gate(GateKind::H, &[0], 0.0),
            gate(GateKind::Ry, &[1], 0.3),
            gate(GateKind::Rx, &[0], 0.9),
        ];
        let mut a = run(2, &prep);
        a.apply_gate(&gate(GateKind::Rzz, &[0, 1], 0.77));
        let mut b = run(2, &prep);
        b.apply_gates(&[
            gate(GateKind::Cx, &[0, 1], 0.0),
            gate(GateKind::Rz, &[1], 0.77),
            gate(GateKind::Cx, &[0, 1], 0.0),
        ]);
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn generator_is_derivative() {
        // d/da RY(a)|psi> = (-i/2) Y RY(a)|psi>
        let a = 0.37;
        let h = 1e-6;
        let f = |x: f64| run(1, &[gate(GateKind::H, &[0], 0.0), gate(GateKind::Ry, &[0], x)]);
        let mut fd = f(a + h);
        fd.axpy(-ONE, &f(a - h));
        fd.scale((0.5 / h).into());
        let mut an = f(a);
        an.apply_generator(GateKind::Ry, &[0]).unwrap();
        an.scale(Complex64::new(0.0, -0.5));
        for (x, y) in fd.amplitudes().iter().zip(an.amplitudes()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-8);
        }
    }
}
