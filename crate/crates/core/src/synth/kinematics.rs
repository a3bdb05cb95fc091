/// Piecewise constant-acceleration motion along a path, starting at time 0
/// and arc length 0. After the last piece the vehicle cruises at its final
/// speed.
#[derive(Debug, Clone)]
pub(crate) struct Profile {
    v0: f64,
    pieces: Vec<Piece>,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    t0: f64,
    s0: f64,
    v0: f64,
    a: f64,
    dur: f64,
}

impl Piece {
    fn s_at(&self, tau: f64) -> f64 {
        self.s0 + self.v0 * tau + 0.5 * self.a * tau * tau
    }

    fn v_at(&self, tau: f64) -> f64 {
        (self.v0 + self.a * tau).max(0.0)
    }
}

impl Profile {
    pub fn new(v0: f64) -> Self {
        Self { v0, pieces: Vec::new() }
    }

    fn end(&self) -> (f64, f64, f64) {
        match self.pieces.last() {
            Some(p) => (p.t0 + p.dur, p.s_at(p.dur), p.v_at(p.dur)),
            None => (0.0, 0.0, self.v0),
        }
    }

    pub fn end_time(&self) -> f64 {
        self.end().0
    }

    pub fn end_s(&self) -> f64 {
        self.end().1
    }

    pub fn accelerate(&mut self, a: f64, dur: f64) {
        if dur <= 0.0 {
            return;
        }
        let (t0, s0, v0) = self.end();
        self.pieces.push(Piece { t0, s0, v0, a, dur });
    }

    pub fn hold_speed(&mut self, dur: f64) {
        self.accelerate(0.0, dur);
    }

    /// Standstill for `dur` seconds; the profile must be at rest.
    pub fn hold(&mut self, dur: f64) {
        debug_assert!(self.end().2.abs() < 1e-9);
        self.accelerate(0.0, dur);
    }

    pub fn cruise_to(&mut self, s: f64) {
        let (_, s0, v) = self.end();
        if v > 0.0 && s > s0 {
            self.accelerate(0.0, (s - s0) / v);
        }
    }

    /// Constant acceleration of magnitude `rate` until speed `v`.
    pub fn ramp_to(&mut self, v: f64, rate: f64) {
        let (_, _, v0) = self.end();
        let dv = v - v0;
        if dv != 0.0 {
            self.accelerate(rate.copysign(dv), dv.abs() / rate);
        }
    }

    /// Arc length and speed at time `t`.
    pub fn at(&self, t: f64) -> (f64, f64) {
        for p in &self.pieces {
            if t <= p.t0 + p.dur {
                let tau = (t - p.t0).max(0.0);
                return (p.s_at(tau), p.v_at(tau));
            }
        }
        let (t1, s1, v1) = self.end();
        (s1 + v1 * (t - t1), v1)
    }

    /// First time the vehicle reaches arc length `s`.
    pub fn time_at(&self, s: f64) -> f64 {
        for p in &self.pieces {
            let s1 = p.s_at(p.dur);
            if s <= s1 && s >= p.s0 && (s1 > p.s0 || s == p.s0) {
                let ds = s - p.s0;
                let disc = (p.v0 * p.v0 + 2.0 * p.a * ds).max(0.0);
                let denom = p.v0 + disc.sqrt();
                let tau = if denom > 0.0 { 2.0 * ds / denom } else { 0.0 };
                return p.t0 + tau.min(p.dur);
            }
        }
        let (t1, s1, v1) = self.end();
        t1 + (s - s1) / v1
    }
}
