//! Network model, compartment states, and the JSON configuration document.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Rate parameters of the open SIR model on a directed transfer graph.
///
/// All rates are per unit of the configured time unit. Immutable once built;
/// [`NetworkModel::new`] enforces finiteness, nonnegativity, matching
/// dimensions and a zero transfer diagonal. Strong connectivity is checked
/// separately by [`validate_connectivity`] because simulation stays well
/// defined without it.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel<T> {
    immigration: Vec<T>,
    birth: Vec<T>,
    death: Vec<T>,
    transfer: Matrix<T>,
    infection: Vec<T>,
    recovery: Vec<T>,
    out_rate: Vec<T>,
}

impl<T: Scalar> NetworkModel<T> {
    pub fn new(
        immigration: Vec<T>,
        birth: Vec<T>,
        death: Vec<T>,
        transfer: Matrix<T>,
        infection: Vec<T>,
        recovery: Vec<T>,
    ) -> Result<Self> {
        let n = immigration.len();
        if n == 0 {
            return Err(Error::Dimension("model needs at least one node".into()));
        }
        for (name, v) in [
            ("B", &immigration),
            ("b", &birth),
            ("d", &death),
            ("beta", &infection),
            ("gamma", &recovery),
        ] {
            if v.len() != n {
                return Err(Error::Dimension(format!(
                    "{name} has {} entries, expected {n}",
                    v.len()
                )));
            }
            if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < T::zero()) {
                return Err(Error::InvalidRate(format!("{name}[{i}] = {x}")));
            }
        }
        if transfer.rows() != n || transfer.cols() != n {
            return Err(Error::Dimension(format!(
                "theta is {}x{}, expected {n}x{n}",
                transfer.rows(),
                transfer.cols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let x = transfer[(i, j)];
                if !x.is_finite() || x < T::zero() {
                    return Err(Error::InvalidRate(format!("theta[{i}][{j}] = {x}")));
                }
            }
            if transfer[(i, i)] != T::zero() {
                return Err(Error::DiagonalTransfer(i));
            }
        }
        let out_rate = (0..n).map(|i| transfer.row(i).iter().copied().sum()).collect();
        Ok(Self {
            immigration,
            birth,
            death,
            transfer,
            infection,
            recovery,
            out_rate,
        })
    }

    pub fn n(&self) -> usize {
        self.immigration.len()
    }

    /// `B`: constant immigration rates (individuals per unit time, before scaling by `N`).
    pub fn immigration(&self) -> &[T] {
        &self.immigration
    }

    /// `b`: per-capita birth rates.
    pub fn birth(&self) -> &[T] {
        &self.birth
    }

    /// `d`: per-capita death rates.
    pub fn death(&self) -> &[T] {
        &self.death
    }

    /// `θ`: per-capita transfer rates, `transfer()[(i, j)]` from node `i` to `j`.
    pub fn transfer(&self) -> &Matrix<T> {
        &self.transfer
    }

    /// `β`: per-capita infectious contact rates.
    pub fn infection(&self) -> &[T] {
        &self.infection
    }

    /// `γ`: per-capita recovery rates.
    pub fn recovery(&self) -> &[T] {
        &self.recovery
    }

    /// Total per-capita transfer rate out of node `i`.
    pub fn out_rate(&self, i: usize) -> T {
        self.out_rate[i]
    }

    /// `Σ_i = γ_i + d_i + Σ_{j≠i} θ_{i,j}`, the rate at which an infective leaves its
    /// current (node, infectious) state.
    pub fn leave_rate(&self, i: usize) -> T {
        self.recovery[i] + self.death[i] + self.out_rate[i]
    }

    pub fn leave_rates(&self) -> Vec<T> {
        (0..self.n()).map(|i| self.leave_rate(i)).collect()
    }

    /// Same demography with new epidemic parameters.
    pub fn with_epidemic(&self, infection: Vec<T>, recovery: Vec<T>) -> Result<Self> {
        Self::new(
            self.immigration.clone(),
            self.birth.clone(),
            self.death.clone(),
            self.transfer.clone(),
            infection,
            recovery,
        )
    }

    pub fn cast<U: Scalar>(&self) -> NetworkModel<U> {
        let c = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<U>>();
        NetworkModel {
            immigration: c(&self.immigration),
            birth: c(&self.birth),
            death: c(&self.death),
            transfer: self.transfer.cast(),
            infection: c(&self.infection),
            recovery: c(&self.recovery),
            out_rate: c(&self.out_rate),
        }
    }

    /// Relabels nodes: node `perm[k]` of `self` becomes node `k`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::Dimension("permutation length".into()));
        }
        let p = |v: &[T]| perm.iter().map(|&k| v[k]).collect::<Vec<T>>();
        let mut theta = Matrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                theta[(a, b)] = self.transfer[(perm[a], perm[b])];
            }
        }
        Self::new(
            p(&self.immigration),
            p(&self.birth),
            p(&self.death),
            theta,
            p(&self.infection),
            p(&self.recovery),
        )
    }
}

/// Individuals per node for the population process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationState {
    pub counts: Vec<u64>,
}

impl PopulationState {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Susceptible, infective and removed counts per node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SirState {
    pub s: Vec<u64>,
    pub i: Vec<u64>,
    pub r: Vec<u64>,
}

impl SirState {
    pub fn n(&self) -> usize {
        self.s.len()
    }

    pub fn population(&self, node: usize) -> u64 {
        self.s[node] + self.i[node] + self.r[node]
    }

    pub fn total_infectives(&self) -> u64 {
        self.i.iter().sum()
    }

    pub fn populations(&self) -> PopulationState {
        PopulationState {
            counts: (0..self.n()).map(|k| self.population(k)).collect(),
        }
    }
}

/// Scaling parameter `N`, scaled initial population and initial infectives.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig<T> {
    scale: T,
    x0: Vec<T>,
    initial_infectives: Vec<u64>,
}

impl<T: Scalar> ScalingConfig<T> {
    pub fn new(scale: T, x0: Vec<T>, initial_infectives: Vec<u64>) -> Result<Self> {
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(Error::Precondition(format!("N must be positive, got {scale}")));
        }
        if x0.len() != initial_infectives.len() {
            return Err(Error::Dimension("x0 and I0 lengths differ".into()));
        }
        if let Some(x) = x0.iter().find(|x| !x.is_finite() || **x < T::zero()) {
            return Err(Error::InvalidRate(format!("x0 entry {x}")));
        }
        let cfg = Self {
            scale,
            x0,
            initial_infectives,
        };
        for (k, (&pop, &inf)) in cfg.initial_population().iter().zip(&cfg.initial_infectives).enumerate() {
            if inf > pop {
                return Err(Error::Precondition(format!(
                    "node {k}: I0 = {inf} exceeds floor(N*x0) = {pop}"
                )));
            }
        }
        Ok(cfg)
    }

    /// `N`.
    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn x0(&self) -> &[T] {
        &self.x0
    }

    pub fn initial_infectives(&self) -> &[u64] {
        &self.initial_infectives
    }

    /// `⌊N·x0⌋`.
    pub fn initial_population(&self) -> Vec<u64> {
        self.x0
            .iter()
            .map(|&x| (self.scale * x).floor().to_u64().unwrap_or(u64::MAX))
            .collect()
    }

    /// `(⌊N·x0⌋ − I0, I0, 0)`.
    pub fn initial_sir(&self) -> SirState {
        let pop = self.initial_population();
        SirState {
            s: pop.iter().zip(&self.initial_infectives).map(|(p, i)| p - i).collect(),
            i: self.initial_infectives.clone(),
            r: vec![0; pop.len()],
        }
    }

    pub fn with_infectives(&self, initial_infectives: Vec<u64>) -> Result<Self> {
        Self::new(self.scale, self.x0.clone(), initial_infectives)
    }

    pub fn with_scale(&self, scale: T) -> Result<Self> {
        Self::new(scale, self.x0.clone(), self.initial_infectives.clone())
    }
}

/// On-disk configuration document. Keys follow the rate symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub n: usize,
    #[serde(rename = "B")]
    pub immigration: Vec<f64>,
    pub b: Vec<f64>,
    pub d: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(rename = "I0", default, skip_serializing_if = "Option::is_none")]
    pub initial_infectives: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_unit: Option<String>,
}

const REQUIRED_KEYS: [&str; 7] = ["n", "B", "b", "d", "theta", "beta", "gamma"];

/// A validated model together with its scaling and time-unit metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub model: NetworkModel<f64>,
    pub scaling: ScalingConfig<f64>,
    pub time_unit: Option<String>,
}

impl LoadedConfig {
    pub fn to_document(&self) -> ModelDocument {
        let m = &self.model;
        ModelDocument {
            n: m.n(),
            immigration: m.immigration().to_vec(),
            b: m.birth().to_vec(),
            d: m.death().to_vec(),
            theta: m.transfer().to_rows(),
            beta: m.infection().to_vec(),
            gamma: m.recovery().to_vec(),
            scale: Some(self.scaling.scale()),
            x0: Some(self.scaling.x0().to_vec()),
            initial_infectives: Some(self.scaling.initial_infectives().to_vec()),
            time_unit: self.time_unit.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("document serializes")
    }
}

/// Parses and validates a configuration document.
///
/// Defaults: `N = 1`, `I0` = one infective in the first node, `x0` = the
/// equilibrium population `z*` (only available when the demography is
/// subcritical; otherwise `x0` is required).
pub fn load_model(config_text: &str) -> Result<LoadedConfig> {
    let value: Value = serde_json::from_str(config_text).map_err(|e| Error::Parse(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Parse("top level must be an object".into()))?;
    if let Some(key) = REQUIRED_KEYS.iter().find(|k| !obj.contains_key(**k)) {
        return Err(Error::MissingField((*key).to_string()));
    }
    let doc: ModelDocument = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    from_document(doc)
}

pub fn from_document(doc: ModelDocument) -> Result<LoadedConfig> {
    let n = doc.n;
    if n == 0 {
        return Err(Error::Dimension("n must be positive".into()));
    }
    if doc.theta.len() != n {
        return Err(Error::Dimension(format!(
            "theta has {} rows, expected {n}",
            doc.theta.len()
        )));
    }
    if let Some(row) = doc.theta.iter().find(|r| r.len() != n) {
        return Err(Error::Dimension(format!(
            "theta row has {} entries, expected {n}",
            row.len()
        )));
    }
    if doc.immigration.len() != n {
        return Err(Error::Dimension(format!(
            "B has {} entries, expected {n}",
            doc.immigration.len()
        )));
    }
    let model = NetworkModel::new(
        doc.immigration,
        doc.b,
        doc.d,
        Matrix::from_rows(&doc.theta)?,
        doc.beta,
        doc.gamma,
    )?;
    let scale = doc.scale.unwrap_or(1.0);
    let x0 = match doc.x0 {
        Some(x0) => x0,
        None => {
            let a = crate::spectral::build_demography_matrix(&model);
            let sub = crate::spectral::check_subcritical(&a)?;
            if !sub.subcritical {
                return Err(Error::MissingField("x0".into()));
            }
            crate::spectral::equilibrium_population(&a, model.immigration())?
        }
    };
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 has {} entries, expected {n}", x0.len())));
    }
    let i0 = doc.initial_infectives.unwrap_or_else(|| {
        let mut v = vec![0; n];
        v[0] = 1;
        v
    });
    if i0.len() != n {
        return Err(Error::Dimension(format!("I0 has {} entries, expected {n}", i0.len())));
    }
    let scaling = ScalingConfig::new(scale, x0, i0)?;
    Ok(LoadedConfig {
        model,
        scaling,
        time_unit: doc.time_unit,
    })
}

/// Result of the strong-connectivity check on the transfer graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Connectivity {
    pub strongly_connected: bool,
    /// Ordered pairs `(from, to)` (0-based) with no directed transfer path.
    pub unreachable: Vec<(usize, usize)>,
}

fn reachable_from<T: Scalar>(theta: &Matrix<T>, start: usize, reverse: bool) -> Vec<bool> {
    let n = theta.rows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            let w = if reverse { theta[(v, u)] } else { theta[(u, v)] };
            if w > T::zero() && !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

/// Checks strong connectivity of `{(i, j) : θ_{i,j} > 0}` by a forward and a
/// backward search from node 0; on failure, lists every unreachable pair.
pub fn validate_connectivity<T: Scalar>(model: &NetworkModel<T>) -> Connectivity {
    let theta = model.transfer();
    let n = model.n();
    let fwd = reachable_from(theta, 0, false);
    let bwd = reachable_from(theta, 0, true);
    if fwd.iter().all(|&x| x) && bwd.iter().all(|&x| x) {
        return Connectivity {
            strongly_connected: true,
            unreachable: Vec::new(),
        };
    }
    let mut unreachable = Vec::new();
    for i in 0..n {
        let seen = reachable_from(theta, i, false);
        unreachable.extend(seen.iter().enumerate().filter(|(_, s)| !**s).map(|(j, _)| (i, j)));
    }
    Connectivity {
        strongly_connected: false,
        unreachable,
    }
}

/// Errors unless the transfer graph is strongly connected.
pub fn require_connected<T: Scalar>(model: &NetworkModel<T>) -> Result<()> {
    let c = validate_connectivity(model);
    if c.strongly_connected {
        Ok(())
    } else {
        Err(Error::NotConnected(c.unreachable.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FMD: &str = r#"{"n":1,"B":[1],"b":[0],"d":[1],"theta":[[0]],"beta":[0.67],"gamma":[0.1818]}"#;

    #[test]
    fn loads_single_node_document_with_defaults() {
        let cfg = load_model(FMD).unwrap();
        assert_eq!(cfg.model.n(), 1);
        assert_eq!(cfg.model.infection(), &[0.67]);
        assert_eq!(cfg.scaling.scale(), 1.0);
        assert_eq!(cfg.scaling.initial_infectives(), &[1]);
        assert!((cfg.scaling.x0()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_diagonal_transfer() {
        let doc = FMD.replace("[[0]]", "[[0.5]]");
        let err = load_model(&doc).unwrap_err();
        assert!(matches!(err, Error::DiagonalTransfer(0)));
        assert!(err.to_string().contains("diagonal transfer"));
    }

    #[test]
    fn reports_missing_gamma() {
        let doc = FMD.replace(r#","gamma":[0.1818]"#, "");
        assert_eq!(load_model(&doc).unwrap_err().to_string(), "missing field gamma");
    }

    #[test]
    fn rejects_negative_rate_and_dimension_mismatch() {
        let neg = FMD.replace(r#""d":[1]"#, r#""d":[-1]"#);
        assert!(matches!(load_model(&neg), Err(Error::InvalidRate(_))));
        let dim = FMD.replace(r#""b":[0]"#, r#""b":[0,0]"#);
        assert!(matches!(load_model(&dim), Err(Error::Dimension(_))));
        assert!(matches!(load_model("{not json"), Err(Error::Parse(_))));
    }

    #[test]
    fn x0_required_without_subcritical_demography() {
        let doc = r#"{"n":1,"B":[0],"b":[0],"d":[0],"theta":[[0]],"beta":[0.67],"gamma":[0.18]}"#;
        assert_eq!(load_model(doc).unwrap_err().to_string(), "missing field x0");
    }

    #[test]
    fn infectives_cannot_exceed_population() {
        let doc = r#"{"n":1,"B":[1],"b":[0],"d":[1],"theta":[[0]],"beta":[1],"gamma":[1],"N":2,"x0":[1],"I0":[3]}"#;
        assert!(matches!(load_model(doc), Err(Error::Precondition(_))));
    }

    fn two_node(t12: f64, t21: f64) -> NetworkModel<f64> {
        NetworkModel::new(
            vec![1.0; 2],
            vec![0.0; 2],
            vec![1.0; 2],
            Matrix::from_rows(&[vec![0.0, t12], vec![t21, 0.0]]).unwrap(),
            vec![1.0; 2],
            vec![1.0; 2],
        )
        .unwrap()
    }

    #[test]
    fn connectivity_cases() {
        let single = load_model(FMD).unwrap().model;
        assert!(validate_connectivity(&single).strongly_connected);
        let one_way = validate_connectivity(&two_node(1.0, 0.0));
        assert!(!one_way.strongly_connected);
        assert_eq!(one_way.unreachable, vec![(1, 0)]);
        assert!(validate_connectivity(&two_node(1.0, 1.0)).strongly_connected);
    }
}
