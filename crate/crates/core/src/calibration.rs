//! Model calibration from node census and movement records, and a seeded
//! synthetic network generator standing in for real trade data.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::NetworkModel;

/// Census line for one holding, all counts per calibration period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: String,
    pub avg_population: f64,
    pub births: f64,
    /// Includes exits to slaughter and to outside the study region.
    pub deaths: f64,
    pub external_in: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementRecord {
    pub src_id: String,
    pub dst_id: String,
    pub count: f64,
}

/// Calibrated model with node ids in model index order (sorted by id).
#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    pub node_ids: Vec<String>,
    pub model: NetworkModel<f64>,
}

pub const DEFAULT_FLOOR_PER_YEAR: f64 = 1e-6;

/// Length of one `time_unit` in years.
pub fn unit_in_years(time_unit: &str) -> Result<f64> {
    let u = time_unit.trim().to_ascii_lowercase();
    let years = match u.trim_end_matches('s') {
        "year" | "yr" | "y" => 1.0,
        "month" => 1.0 / 12.0,
        "week" => 7.0 / 365.25,
        "day" | "d" => 1.0 / 365.25,
        "hour" | "h" => 1.0 / (365.25 * 24.0),
        _ => return Err(Error::Parse(format!("unknown time unit {time_unit:?}"))),
    };
    Ok(years)
}

/// The default transfer-rate floor of `1e-6` per year expressed per `time_unit`.
pub fn default_floor(time_unit: &str) -> Result<f64> {
    Ok(DEFAULT_FLOOR_PER_YEAR * unit_in_years(time_unit)?)
}

fn check_count(what: &str, id: &str, x: f64) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::InvalidRate(format!("{what} of {id:?} = {x}")));
    }
    Ok(())
}

/// Ratio estimates `b = births/pop`, `d = deaths/pop`, `B = external_in`,
/// `θ_ij = flow(i→j)/pop_i`, with zero off-diagonal transfer estimates
/// replaced by `floor`. Infection and recovery rates are left at zero.
///
/// Nodes are ordered by `node_id` and repeated movement records for a pair
/// are summed in sorted order, so the result does not depend on record order.
pub fn calibrate(nodes: &[NodeRecord], moves: &[MovementRecord], floor: f64) -> Result<Calibrated> {
    if !floor.is_finite() || floor < 0.0 {
        return Err(Error::Precondition(format!("floor must be nonnegative, got {floor}")));
    }
    let mut sorted: Vec<&NodeRecord> = nodes.iter().collect();
    sorted.sort_by(|a, b| a.node_id.cmp(&b.node_id));
    let mut index = HashMap::new();
    for (k, rec) in sorted.iter().enumerate() {
        if index.insert(rec.node_id.as_str(), k).is_some() {
            return Err(Error::Precondition(format!("duplicate node id {:?}", rec.node_id)));
        }
        if !(rec.avg_population > 0.0) || !rec.avg_population.is_finite() {
            return Err(Error::InvalidRate(format!(
                "avg_population of {:?} = {}",
                rec.node_id, rec.avg_population
            )));
        }
        check_count("births", &rec.node_id, rec.births)?;
        check_count("deaths", &rec.node_id, rec.deaths)?;
        check_count("external_in", &rec.node_id, rec.external_in)?;
    }
    let n = sorted.len();
    let mut flows: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for mv in moves {
        let lookup = |id: &str| index.get(id).copied().ok_or_else(|| Error::UnknownNode(id.to_string()));
        let (i, j) = (lookup(&mv.src_id)?, lookup(&mv.dst_id)?);
        if i == j {
            return Err(Error::Precondition(format!("movement from {:?} to itself", mv.src_id)));
        }
        check_count("movement count", &mv.src_id, mv.count)?;
        flows.entry((i, j)).or_default().push(mv.count);
    }
    let mut theta = Matrix::zeros(n, n);
    for ((i, j), mut counts) in flows {
        counts.sort_by(f64::total_cmp);
        theta[(i, j)] = counts.iter().sum::<f64>() / sorted[i].avg_population;
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && theta[(i, j)] == 0.0 {
                theta[(i, j)] = floor;
            }
        }
    }
    let model = NetworkModel::new(
        sorted.iter().map(|r| r.external_in).collect(),
        sorted.iter().map(|r| r.births / r.avg_population).collect(),
        sorted.iter().map(|r| r.deaths / r.avg_population).collect(),
        theta,
        vec![0.0; n],
        vec![0.0; n],
    )?;
    Ok(Calibrated {
        node_ids: sorted.iter().map(|r| r.node_id.clone()).collect(),
        model,
    })
}

pub fn read_nodes_csv(reader: impl Read) -> Result<Vec<NodeRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_movements_csv(reader: impl Read) -> Result<Vec<MovementRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_nodes_csv(writer: impl Write, nodes: &[NodeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for rec in nodes {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_movements_csv(writer: impl Write, moves: &[MovementRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for rec in moves {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Closed intervals the synthetic rates are drawn from. `lo == hi` pins a rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthRanges {
    pub immigration: (f64, f64),
    pub birth: (f64, f64),
    pub death: (f64, f64),
    pub transfer: (f64, f64),
    pub infection: (f64, f64),
    pub recovery: (f64, f64),
}

impl Default for SynthRanges {
    /// Per-day rates of a cattle-like network carrying the FMD parameters:
    /// slow demography, transfers far below the recovery rate, `d > b` per node.
    fn default() -> Self {
        Self {
            immigration: (0.5, 5.0),
            birth: (0.0, 5e-4),
            death: (1e-3, 3e-3),
            transfer: (1e-5, 1e-4),
            infection: (0.67, 0.67),
            recovery: (1.0 / 5.5, 1.0 / 5.5),
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Random strongly connected model with default rate ranges.
pub fn synth_network(n: usize, density: f64, seed: u64) -> Result<NetworkModel<f64>> {
    synth_network_with(n, density, seed, &SynthRanges::default())
}

/// Each ordered pair carries an edge with probability `density`; a random
/// Hamiltonian cycle is always added so the graph is strongly connected.
pub fn synth_network_with(n: usize, density: f64, seed: u64, ranges: &SynthRanges) -> Result<NetworkModel<f64>> {
    if n == 0 {
        return Err(Error::Precondition("synthetic network needs n >= 1".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Precondition(format!(
            "density must lie in (0, 1], got {density}"
        )));
    }
    for (lo, hi) in [
        ranges.immigration,
        ranges.birth,
        ranges.death,
        ranges.transfer,
        ranges.infection,
        ranges.recovery,
    ] {
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Precondition(format!("bad rate range ({lo}, {hi})")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        order.swap(k, rng.random_range(0..=k));
    }
    let mut edge = vec![vec![false; n]; n];
    if n > 1 {
        for k in 0..n {
            edge[order[k]][order[(k + 1) % n]] = true;
        }
    }
    let mut theta = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let coin: f64 = rng.random();
            if edge[i][j] || coin < density {
                theta[(i, j)] = draw(&mut rng, ranges.transfer);
            }
        }
    }
    let mut fill = |r| (0..n).map(|_| draw(&mut rng, r)).collect::<Vec<f64>>();
    let immigration = fill(ranges.immigration);
    let birth = fill(ranges.birth);
    let death = fill(ranges.death);
    let infection = fill(ranges.infection);
    let recovery = fill(ranges.recovery);
    NetworkModel::new(immigration, birth, death, theta, infection, recovery)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_connectivity;

    fn node(id: &str, pop: f64, births: f64, deaths: f64, ext: f64) -> NodeRecord {
        NodeRecord {
            node_id: id.into(),
            avg_population: pop,
            births,
            deaths,
            external_in: ext,
        }
    }

    fn mv(src: &str, dst: &str, count: f64) -> MovementRecord {
        MovementRecord {
            src_id: src.into(),
            dst_id: dst.into(),
            count,
        }
    }

    #[test]
    fn birth_ratio() {
        let c = calibrate(&[node("a", 100.0, 20.0, 10.0, 3.0)], &[], 1e-6).unwrap();
        assert_eq!(c.model.birth()[0], 0.2);
        assert_eq!(c.model.death()[0], 0.1);
        assert_eq!(c.model.immigration()[0], 3.0);
    }

    #[test]
    fn missing_flow_is_floored() {
        let nodes = [node("1", 50.0, 5.0, 5.0, 1.0), node("2", 20.0, 0.0, 4.0, 0.0)];
        let c = calibrate(&nodes, &[mv("1", "2", 10.0)], 1e-6).unwrap();
        assert_eq!(c.model.transfer()[(0, 1)], 0.2);
        assert_eq!(c.model.transfer()[(1, 0)], 1e-6);
        assert_eq!(c.model.birth()[1], 0.0);
        assert!(validate_connectivity(&c.model).strongly_connected);
    }

    #[test]
    fn record_errors() {
        let nodes = [node("1", 50.0, 5.0, 5.0, 1.0)];
        assert!(matches!(
            calibrate(&nodes, &[mv("1", "9", 1.0)], 0.0),
            Err(Error::UnknownNode(_))
        ));
        assert!(calibrate(&[node("1", 0.0, 1.0, 1.0, 1.0)], &[], 0.0).is_err());
        assert!(calibrate(
            &[node("1", 1.0, 1.0, 1.0, 1.0), node("1", 1.0, 1.0, 1.0, 1.0)],
            &[],
            0.0
        )
        .is_err());
    }

    #[test]
    fn floor_units() {
        assert_eq!(default_floor("years").unwrap(), 1e-6);
        assert!((default_floor("day").unwrap() - 1e-6 / 365.25).abs() < 1e-22);
        assert!(default_floor("fortnight").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let nodes = vec![node("x", 10.0, 1.5, 2.0, 0.25)];
        let mut buf = Vec::new();
        write_nodes_csv(&mut buf, &nodes).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("node_id,avg_population,births,deaths,external_in\n"));
        assert_eq!(read_nodes_csv(buf.as_slice()).unwrap(), nodes);
    }

    #[test]
    fn synth_single_and_complete() {
        let one = synth_network(1, 0.3, 7).unwrap();
        assert_eq!(one.transfer()[(0, 0)], 0.0);
        let full = synth_network(5, 1.0, 1).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(full.transfer()[(i, j)] > 0.0, i != j);
            }
        }
        assert_eq!(synth_network(5, 0.4, 9).unwrap(), synth_network(5, 0.4, 9).unwrap());
    }

    #[test]
    fn synth_sparse_is_connected() {
        assert!(validate_connectivity(&synth_network(50, 0.1, 3).unwrap()).strongly_connected);
    }
}
