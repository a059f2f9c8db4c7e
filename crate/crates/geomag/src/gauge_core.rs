//! Matrix-valued gauge connections, Wilson lines, curvature and connections
//! built from unitary families.
//!
//! Conventions: a connection A has one Hermitian component per spatial
//! direction; the Wilson line solves dW/dt = i A(R(t)).R'(t) W with W(0) = 1,
//! so later segments multiply on the left.

use std::sync::Arc;

use crate::error::{GeomagError, Result};
use crate::linalg::{
    all_finite, expi_hermitian, hermiticity_defect, identity, max_abs, symmetrize,
    unitarity_defect, CMat, I,
};
use crate::C64;

type ConnFn = dyn Fn(&[f64]) -> Vec<CMat> + Send + Sync;
type UnitaryFn = dyn Fn(&[f64]) -> CMat + Send + Sync;
type PathFn = dyn Fn(f64) -> Vec<f64> + Send + Sync;

/// A point where the connection blows up, with a radius inside which
/// evaluation is refused.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularLocus {
    pub center: Vec<f64>,
    pub exclusion_radius: f64,
}

impl SingularLocus {
    fn distance(&self, p: &[f64]) -> f64 {
        self.center
            .iter()
            .zip(p)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone)]
pub struct GaugeConnection {
    dim: usize,
    channels: usize,
    eval: Arc<ConnFn>,
    singular: Option<SingularLocus>,
}

impl std::fmt::Debug for GaugeConnection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaugeConnection")
            .field("dim", &self.dim)
            .field("channels", &self.channels)
            .field("singular", &self.singular)
            .finish()
    }
}

impl GaugeConnection {
    pub fn new<F>(dim: usize, channels: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<CMat> + Send + Sync + 'static,
    {
        GaugeConnection {
            dim,
            channels,
            eval: Arc::new(eval),
            singular: None,
        }
    }

    pub fn with_singular_locus(mut self, locus: SingularLocus) -> Self {
        self.singular = Some(locus);
        self
    }

    /// The zero connection.
    pub fn zero(dim: usize, channels: usize) -> Self {
        Self::new(dim, channels, move |_| {
            vec![CMat::zeros(channels, channels); dim]
        })
    }

    /// A constant connection.
    pub fn constant(components: Vec<CMat>) -> Self {
        let dim = components.len();
        let channels = components[0].nrows();
        Self::new(dim, channels, move |_| components.clone())
    }

    /// Connection i U^dag dU obtained from a unitary family by central
    /// differences with step h.
    pub fn from_unitary(fam: UnitaryFamily, dim: usize, h: f64) -> Self {
        let channels = fam.eval(&vec![0.0; dim]).nrows();
        let fam2 = fam.clone();
        Self::new(dim, channels, move |p| {
            match connection_from_unitary(&fam2, p, h) {
                Ok(s) => s.components,
                Err(_) => {
                    vec![CMat::from_element(channels, channels, C64::new(f64::NAN, 0.0)); dim]
                }
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn singular_locus(&self) -> Option<&SingularLocus> {
        self.singular.as_ref()
    }

    fn check_domain(&self, p: &[f64], margin: f64) -> Result<()> {
        if let Some(s) = &self.singular {
            let d = s.distance(p);
            if d < s.exclusion_radius + margin {
                return Err(GeomagError::Domain(format!(
                    "point {p:?} is {d:.3e} from the singular locus (exclusion radius {} + margin {margin})",
                    s.exclusion_radius
                )));
            }
        }
        Ok(())
    }

    /// Components A_mu at p, refusing points inside the exclusion radius.
    pub fn components(&self, p: &[f64]) -> Result<Vec<CMat>> {
        self.check_domain(p, 0.0)?;
        Ok((self.eval)(p))
    }
}

#[derive(Clone)]
pub struct UnitaryFamily {
    eval: Arc<UnitaryFn>,
}

impl UnitaryFamily {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&[f64]) -> CMat + Send + Sync + 'static,
    {
        UnitaryFamily { eval: Arc::new(f) }
    }

    pub fn eval(&self, p: &[f64]) -> CMat {
        (self.eval)(p)
    }

    /// Evaluate and check unitarity to 1e-10.
    pub fn eval_checked(&self, p: &[f64]) -> Result<CMat> {
        let u = self.eval(p);
        let d = unitarity_defect(&u);
        if !(d <= 1e-10) {
            return Err(GeomagError::Invariant(format!(
                "family not unitary at {p:?}: defect {d:.3e}"
            )));
        }
        Ok(u)
    }
}

/// Parametrized path t in [0, 1] -> R(t).
#[derive(Clone)]
pub struct ParamPath {
    f: Arc<PathFn>,
    tangent: Option<Arc<PathFn>>,
    closed: bool,
}

impl ParamPath {
    pub fn new<F>(f: F, closed: bool) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        ParamPath {
            f: Arc::new(f),
            tangent: None,
            closed,
        }
    }

    /// Attach the exact derivative dR/dt; the Wilson line then uses it in
    /// place of the chord.
    pub fn with_tangent<F>(mut self, d: F) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.tangent = Some(Arc::new(d));
        self
    }

    pub fn tangent(&self, t: f64) -> Option<Vec<f64>> {
        self.tangent.as_ref().map(|d| d(t))
    }

    /// Straight segment from a to b.
    pub fn segment(a: Vec<f64>, b: Vec<f64>) -> Self {
        Self::new(
            move |t| a.iter().zip(&b).map(|(x, y)| x + t * (y - x)).collect(),
            false,
        )
    }

    /// Circular arc of radius r about the origin from angle phi0 to phi1.
    pub fn arc(r: f64, phi0: f64, phi1: f64) -> Self {
        let closed = ((phi1 - phi0).abs() - 2.0 * std::f64::consts::PI).abs() < 1e-14;
        let w = phi1 - phi0;
        Self::new(
            move |t| {
                let p = phi0 + t * w;
                vec![r * p.cos(), r * p.sin()]
            },
            closed,
        )
        .with_tangent(move |t| {
            let p = phi0 + t * w;
            vec![-r * w * p.sin(), r * w * p.cos()]
        })
    }

    pub fn point(&self, t: f64) -> Vec<f64> {
        (self.f)(t)
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// The same curve traversed backwards.
    pub fn reversed(&self) -> Self {
        let f = self.f.clone();
        let tangent = self.tangent.clone().map(|d| {
            Arc::new(move |t: f64| d(1.0 - t).into_iter().map(|x| -x).collect()) as Arc<PathFn>
        });
        ParamPath {
            f: Arc::new(move |t| f(1.0 - t)),
            tangent,
            closed: self.closed,
        }
    }

    /// N samples at strictly increasing t.
    pub fn samples(&self, n: usize) -> Vec<(f64, Vec<f64>)> {
        (0..n)
            .map(|j| {
                let t = j as f64 / (n - 1) as f64;
                (t, self.point(t))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct HolonomyResult {
    pub unitary: CMat,
    pub steps: usize,
    /// Richardson estimate |W_N - W_{N/2}| / 3 of the discretization error.
    pub error_estimate: f64,
    pub unitarity_defect: f64,
}

fn ordered_product(conn: &GaugeConnection, path: &ParamPath, steps: usize) -> Result<CMat> {
    let n = conn.channels();
    let mut w = identity(n);
    let mut prev = path.point(0.0);
    for j in 0..steps {
        let t0 = j as f64 / steps as f64;
        let t1 = (j + 1) as f64 / steps as f64;
        let tm = 0.5 * (t0 + t1);
        let next = path.point(t1);
        let mid = path.point(tm);
        let comps = conn.components(&mid)?;
        let step: Vec<f64> = match path.tangent(tm) {
            Some(d) => d.iter().map(|x| x * (t1 - t0)).collect(),
            None => next.iter().zip(&prev).map(|(a, b)| a - b).collect(),
        };
        let mut gen = CMat::zeros(n, n);
        for (mu, a) in comps.iter().enumerate() {
            gen += a.scale(step[mu]);
        }
        if !all_finite(&gen) {
            return Err(GeomagError::Evaluation { t: tm });
        }
        w = expi_hermitian(&symmetrize(&gen)) * w;
        prev = next;
    }
    Ok(w)
}

/// Path-ordered exponential P exp(i int A.dR) along `path` by the midpoint rule.
pub fn wilson_line(
    conn: &GaugeConnection,
    path: &ParamPath,
    steps: usize,
) -> Result<HolonomyResult> {
    if steps < 2 {
        return Err(GeomagError::Argument("wilson_line needs steps >= 2".into()));
    }
    let w = ordered_product(conn, path, steps)?;
    let coarse = ordered_product(conn, path, steps / 2)?;
    let error_estimate = max_abs(&(&w - &coarse)) / 3.0;
    Ok(HolonomyResult {
        unitarity_defect: unitarity_defect(&w),
        unitary: w,
        steps,
        error_estimate,
    })
}

/// Antisymmetric table F[mu][nu] = d_mu A_nu - d_nu A_mu - i [A_mu, A_nu]
/// by central differences of step h.
pub fn curvature(conn: &GaugeConnection, point: &[f64], h: f64) -> Result<Vec<Vec<CMat>>> {
    if h <= 0.0 {
        return Err(GeomagError::Argument("curvature needs h > 0".into()));
    }
    let d = conn.dim();
    if point.len() != d {
        return Err(GeomagError::Argument(format!(
            "point has {} coordinates, connection has dimension {d}",
            point.len()
        )));
    }
    conn.check_domain(point, 2.0 * h)?;
    let n = conn.channels();
    let a = conn.components(point)?;
    // derivs[mu] = d_mu of every component
    let mut derivs = Vec::with_capacity(d);
    for mu in 0..d {
        let mut pp = point.to_vec();
        let mut pm = point.to_vec();
        pp[mu] += h;
        pm[mu] -= h;
        let ap = conn.components(&pp)?;
        let am = conn.components(&pm)?;
        let dm: Vec<CMat> = ap
            .iter()
            .zip(&am)
            .map(|(x, y)| (x - y).scale(0.5 / h))
            .collect();
        derivs.push(dm);
    }
    let mut f = vec![vec![CMat::zeros(n, n); d]; d];
    for mu in 0..d {
        for nu in (mu + 1)..d {
            let comm = &a[mu] * &a[nu] - &a[nu] * &a[mu];
            let fmn = &derivs[mu][nu] - &derivs[nu][mu] - comm.map(|z| I * z);
            f[nu][mu] = -fmn.clone();
            f[mu][nu] = fmn;
        }
    }
    Ok(f)
}

/// Largest entry over all F_{mu nu}.
pub fn curvature_norm(f: &[Vec<CMat>]) -> f64 {
    f.iter()
        .flat_map(|row| row.iter().map(max_abs))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct ConnectionSample {
    pub components: Vec<CMat>,
    /// max |A - A^dag| per component before symmetrization.
    pub hermiticity_defect: Vec<f64>,
}

/// Components i U^dag d_mu U at `point`, symmetrized to be Hermitian.
pub fn connection_from_unitary(
    fam: &UnitaryFamily,
    point: &[f64],
    h: f64,
) -> Result<ConnectionSample> {
    let u = fam.eval_checked(point)?;
    let ud = u.adjoint();
    let mut components = Vec::with_capacity(point.len());
    let mut defects = Vec::with_capacity(point.len());
    for mu in 0..point.len() {
        let mut pp = point.to_vec();
        let mut pm = point.to_vec();
        pp[mu] += h;
        pm[mu] -= h;
        let du = (fam.eval_checked(&pp)? - fam.eval_checked(&pm)?).scale(0.5 / h);
        let a = (&ud * du).map(|z| I * z);
        defects.push(hermiticity_defect(&a));
        components.push(symmetrize(&a));
    }
    Ok(ConnectionSample {
        components,
        hermiticity_defect: defects,
    })
}

/// Restriction P A P of a connection to the channel subset `channels`.
pub fn projected_connection(conn: &GaugeConnection, channels: &[usize]) -> Result<GaugeConnection> {
    if channels.is_empty() {
        return Err(GeomagError::Argument("empty channel subset".into()));
    }
    let n = conn.channels();
    if let Some(&bad) = channels.iter().find(|&&c| c >= n) {
        return Err(GeomagError::Argument(format!(
            "channel index {bad} out of range for {n} channels"
        )));
    }
    let idx = channels.to_vec();
    let m = idx.len();
    let inner = conn.clone();
    let mut out = GaugeConnection::new(conn.dim(), m, move |p| {
        (inner.eval)(p)
            .into_iter()
            .map(|a| CMat::from_fn(m, m, |i, j| a[(idx[i], idx[j])]))
            .collect()
    });
    out.singular = conn.singular.clone();
    Ok(out)
}
