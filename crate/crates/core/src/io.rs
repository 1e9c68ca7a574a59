//! On-disk formats: .nfds dataset containers, model checkpoints,
//! loss-history CSV files, and content hashing for the reproducibility
//! manifest. All binary payloads are little-endian float64, column-major;
//! every file starts with a u64 length-prefixed JSON header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::TrajectorySet;
use crate::error::{Error, Result};
use crate::integrate::TimeGrid;
use crate::mlp::Activation;
use crate::nf_autoencoder::{HistoryRow, LossWeights, NfAutoencoder, TrainHistory};
use crate::normal_forms::NormalFormKind;

pub const SCHEMA_VERSION: u32 = 1;

// -- framing --------------------------------------------------------------

fn write_header<W: Write, H: Serialize>(w: &mut W, header: &H) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

fn read_header<R: Read, H: for<'de> Deserialize<'de>>(r: &mut R) -> Result<H> {
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let len = u64::from_le_bytes(len_bytes) as usize;
    if len > 1 << 30 {
        return Err(Error::Format(format!("header length {len} is implausible")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(serde_json::from_slice(&buf)?)
}

fn write_f64s<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

// -- .nfds dataset container ----------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NfdsHeader {
    pub schema_version: u32,
    /// Name of the generating system or data source.
    pub system: String,
    /// Generating specification, stored verbatim for audits.
    pub spec: serde_json::Value,
    pub grid: TimeGrid,
    pub trim: usize,
    pub state_dim: usize,
    pub t_kept: usize,
    pub n_traj: usize,
    /// sha256 of the generating config document.
    pub config_hash: String,
}

pub fn write_nfds(path: &Path, header: &NfdsHeader, set: &TrajectorySet) -> Result<()> {
    if set.u.nrows() != header.state_dim
        || set.t_kept != header.t_kept
        || set.n_traj() != header.n_traj
    {
        return Err(Error::DimensionMismatch {
            expected: header.state_dim * header.t_kept * header.n_traj,
            got: set.u.len(),
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, header)?;
    // column-major payloads: U, U_dot, alpha
    write_f64s(&mut w, set.u.t().iter().copied())?;
    write_f64s(&mut w, set.u_dot.t().iter().copied())?;
    write_f64s(&mut w, set.alpha.iter().copied())?;
    w.flush()?;
    Ok(())
}

pub fn read_nfds(path: &Path) -> Result<(NfdsHeader, TrajectorySet)> {
    let mut r = BufReader::new(File::open(path)?);
    let header: NfdsHeader = read_header(&mut r)?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema version {}",
            header.schema_version
        )));
    }
    let cols = header.t_kept * header.n_traj;
    let n = header.state_dim * cols;
    let u_raw = read_f64s(&mut r, n)?;
    let u_dot_raw = read_f64s(&mut r, n)?;
    let alpha = read_f64s(&mut r, header.n_traj)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after payloads".into()));
    }
    let shape = (header.state_dim, cols);
    let from_col_major = |raw: Vec<f64>| -> Array2<f64> {
        Array2::from_shape_vec((cols, header.state_dim), raw)
            .unwrap()
            .t()
            .to_owned()
    };
    let set = TrajectorySet {
        u: from_col_major(u_raw),
        u_dot: from_col_major(u_dot_raw),
        alpha,
        t_kept: header.t_kept,
        grid: header.grid,
    };
    debug_assert_eq!(set.u.dim(), shape);
    Ok((header, set))
}

// -- checkpoints ----------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schema_version: u32,
    pub phi1_sizes: Vec<usize>,
    pub psi1_sizes: Vec<usize>,
    pub phi2_sizes: Vec<usize>,
    pub psi2_sizes: Vec<usize>,
    pub activation: Activation,
    pub kind: NormalFormKind,
    pub omega: f64,
    pub tau: f64,
    pub tau_trainable: bool,
    pub orientation: f64,
    pub loss_weights: LossWeights,
    pub seed: u64,
    /// sha256 of the dataset used for training, chained for audits.
    pub dataset_hash: String,
    pub n_params: usize,
}

pub fn write_checkpoint(
    path: &Path,
    model: &NfAutoencoder,
    loss_weights: &LossWeights,
    seed: u64,
    dataset_hash: &str,
) -> Result<()> {
    let header = CheckpointHeader {
        schema_version: SCHEMA_VERSION,
        phi1_sizes: model.phi1.layer_sizes.clone(),
        psi1_sizes: model.psi1.layer_sizes.clone(),
        phi2_sizes: model.phi2.layer_sizes.clone(),
        psi2_sizes: model.psi2.layer_sizes.clone(),
        activation: model.phi1.activation,
        kind: model.kind,
        omega: model.omega,
        tau: model.tau(),
        tau_trainable: model.tau_trainable,
        orientation: model.orientation,
        loss_weights: *loss_weights,
        seed,
        dataset_hash: dataset_hash.to_string(),
        n_params: model.n_params(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, &header)?;
    write_f64s(&mut w, model.params_flat().into_iter())?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, NfAutoencoder)> {
    let mut r = BufReader::new(File::open(path)?);
    let header: CheckpointHeader = read_header(&mut r)?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema version {}",
            header.schema_version
        )));
    }
    let act = header.activation;
    let phi1 = crate::mlp::Mlp::init(&header.phi1_sizes, act, 0)?;
    let psi1 = crate::mlp::Mlp::init(&header.psi1_sizes, act, 0)?;
    let phi2 = crate::mlp::Mlp::init(&header.phi2_sizes, act, 0)?;
    let psi2 = crate::mlp::Mlp::init(&header.psi2_sizes, act, 0)?;
    let mut model = NfAutoencoder::new(
        phi1,
        psi1,
        phi2,
        psi2,
        header.kind,
        header.omega,
        header.tau,
        header.tau_trainable,
        header.orientation,
    )?;
    if model.n_params() != header.n_params {
        return Err(Error::Format(format!(
            "parameter count mismatch: header says {}, sizes give {}",
            header.n_params,
            model.n_params()
        )));
    }
    let flat = read_f64s(&mut r, header.n_params)?;
    model.set_params_flat(&flat);
    Ok((header, model))
}

// -- loss-history CSV -----------------------------------------------------

pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut out = String::from("iteration,l1,l2,l3,l4,l5,l6,total,tau\n");
    for r in &history.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.iteration, r.l1, r.l2, r.l3, r.l4, r.l5, r.l6, r.total, r.tau
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_history_csv(path: &Path) -> Result<TrainHistory> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "iteration,l1,l2,l3,l4,l5,l6,total,tau" {
                return Err(Error::Format("unexpected history CSV header".into()));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Format(format!("history line {i} has {} fields", fields.len())));
        }
        let f = |k: usize| -> Result<f64> {
            fields[k]
                .parse()
                .map_err(|_| Error::Format(format!("bad number {:?} on line {i}", fields[k])))
        };
        rows.push(HistoryRow {
            iteration: fields[0]
                .parse()
                .map_err(|_| Error::Format(format!("bad iteration on line {i}")))?,
            l1: f(1)?,
            l2: f(2)?,
            l3: f(3)?,
            l4: f(4)?,
            l5: f(5)?,
            l6: f(6)?,
            total: f(7)?,
            tau: f(8)?,
        });
    }
    Ok(TrainHistory { rows })
}

// -- hashing --------------------------------------------------------------

pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

pub fn hash_file(path: &Path) -> Result<String> {
    let mut r = BufReader::new(File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(format!("{:x}", h.finalize()))
}

/// Canonical hash of a config document: serialized JSON bytes.
pub fn hash_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(hash_bytes(&serde_json::to_vec(value)?))
}

// -- POD basis files ------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisHeader {
    pub schema_version: u32,
    pub space_dim: usize,
    pub m: usize,
    pub config_hash: String,
}

pub fn write_basis(path: &Path, basis: &crate::pod::PodBasis, config_hash: &str) -> Result<()> {
    let header = BasisHeader {
        schema_version: SCHEMA_VERSION,
        space_dim: basis.mean_field.len(),
        m: basis.m,
        config_hash: config_hash.to_string(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, &header)?;
    write_f64s(&mut w, basis.mean_field.iter().copied())?;
    write_f64s(&mut w, basis.modes.t().iter().copied())?;
    write_f64s(&mut w, basis.singular_values.iter().copied())?;
    write_f64s(&mut w, basis.gamma.t().iter().copied())?;
    w.flush()?;
    Ok(())
}

pub fn read_basis(path: &Path) -> Result<(BasisHeader, crate::pod::PodBasis)> {
    let mut r = BufReader::new(File::open(path)?);
    let header: BasisHeader = read_header(&mut r)?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema version {}",
            header.schema_version
        )));
    }
    let (space, m) = (header.space_dim, header.m);
    let mean_field = ndarray::Array1::from_vec(read_f64s(&mut r, space)?);
    let modes = Array2::from_shape_vec((m, space), read_f64s(&mut r, space * m)?)?
        .t()
        .to_owned();
    let singular_values = ndarray::Array1::from_vec(read_f64s(&mut r, m)?);
    let gamma = Array2::from_shape_vec((m, m), read_f64s(&mut r, m * m)?)?
        .t()
        .to_owned();
    Ok((
        header,
        crate::pod::PodBasis { mean_field, modes, singular_values, gamma, m },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Mlp;
    use crate::pod;
    use ndarray::Array1;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_set(seed: u64) -> TrajectorySet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dim, t_kept, n) = (3, 5, 4);
        TrajectorySet {
            u: Array2::from_shape_fn((dim, t_kept * n), |_| rng.gen_range(-1.0..1.0)),
            u_dot: Array2::from_shape_fn((dim, t_kept * n), |_| rng.gen_range(-1.0..1.0)),
            alpha: (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            t_kept,
            grid: TimeGrid::new(0.0, 1.0, t_kept).unwrap(),
        }
    }

    fn sample_header(set: &TrajectorySet) -> NfdsHeader {
        NfdsHeader {
            schema_version: SCHEMA_VERSION,
            system: "test".into(),
            spec: serde_json::json!({"note": "round trip"}),
            grid: set.grid,
            trim: 0,
            state_dim: set.u.nrows(),
            t_kept: set.t_kept,
            n_traj: set.n_traj(),
            config_hash: hash_bytes(b"config"),
        }
    }

    #[test]
    fn nfds_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.nfds");
        let set = sample_set(1);
        write_nfds(&path, &sample_header(&set), &set).unwrap();
        let (header, back) = read_nfds(&path).unwrap();
        assert_eq!(header.system, "test");
        assert_eq!(back, set);
    }

    #[test]
    fn nfds_writes_are_byte_identical_per_seed() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.nfds");
        let p2 = dir.path().join("b.nfds");
        let set = sample_set(7);
        write_nfds(&p1, &sample_header(&set), &set).unwrap();
        write_nfds(&p2, &sample_header(&set), &set).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(hash_file(&p1).unwrap(), hash_file(&p2).unwrap());
    }

    #[test]
    fn nfds_rejects_truncated_and_oversized_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.nfds");
        let set = sample_set(2);
        write_nfds(&path, &sample_header(&set), &set).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(read_nfds(&path).is_err());
        let mut extended = bytes.clone();
        extended.extend_from_slice(&[0u8; 8]);
        std::fs::write(&path, &extended).unwrap();
        assert!(matches!(read_nfds(&path), Err(Error::Format(_))));
    }

    fn sample_model(seed: u64) -> NfAutoencoder {
        NfAutoencoder::init(
            3,
            NormalFormKind::Hopf,
            1.2,
            0.9,
            true,
            -1.0,
            &[5],
            &[5],
            &[3],
            &[3],
            Activation::Elu,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = sample_model(5);
        let w = LossWeights::lorenz96();
        write_checkpoint(&path, &model, &w, 42, "deadbeef").unwrap();
        let (header, back) = read_checkpoint(&path).unwrap();
        assert_eq!(header.seed, 42);
        assert_eq!(header.dataset_hash, "deadbeef");
        assert_eq!(header.loss_weights, w);
        assert_eq!(back.params_flat(), model.params_flat());
        assert_eq!(back.kind, model.kind);
        assert_eq!(back.orientation, model.orientation);
        assert_eq!(back.tau_trainable, model.tau_trainable);
        assert!((back.tau() - model.tau()).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_detects_parameter_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = sample_model(6);
        write_checkpoint(&path, &model, &LossWeights::lorenz96(), 0, "").unwrap();
        // corrupt the header's n_params
        let bytes = std::fs::read(&path).unwrap();
        let len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let json = String::from_utf8(bytes[8..8 + len].to_vec()).unwrap();
        let bad = json.replace(
            &format!("\"n_params\":{}", model.n_params()),
            &format!("\"n_params\":{}", model.n_params() + 1),
        );
        assert_ne!(json, bad);
        let mut out = (bad.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(bad.as_bytes());
        out.extend_from_slice(&bytes[8 + len..]);
        std::fs::write(&path, out).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Format(_))));
    }

    #[test]
    fn history_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        let history = TrainHistory {
            rows: (0..5)
                .map(|i| HistoryRow {
                    iteration: i,
                    l1: i as f64 * 0.1,
                    l2: 0.01,
                    l3: 1e-3,
                    l4: 1e-4,
                    l5: 0.0,
                    l6: 0.5,
                    total: 0.7,
                    tau: 0.825,
                })
                .collect(),
        };
        write_history_csv(&path, &history).unwrap();
        let back = read_history_csv(&path).unwrap();
        assert_eq!(back.rows, history.rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("iteration,l1,l2,l3,l4,l5,l6,total,tau\n"));
    }

    #[test]
    fn basis_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let snapshots = Array2::from_shape_fn((12, 30), |_| rng.gen_range(-1.0..1.0));
        let (mut basis, mut series) = pod::pod_decompose(&snapshots, 4, 0, 1).unwrap();
        pod::apply_mixing(&mut basis, &mut series, pod::make_unitary_gamma(4, 2).unwrap())
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.nfb");
        write_basis(&path, &basis, "abc").unwrap();
        let (header, back) = read_basis(&path).unwrap();
        assert_eq!(header.m, 4);
        assert_eq!(back.mean_field, basis.mean_field);
        assert_eq!(back.modes, basis.modes);
        assert_eq!(back.singular_values, basis.singular_values);
        assert_eq!(back.gamma, basis.gamma);
    }

    #[test]
    fn hashing_is_stable_and_sensitive() {
        assert_eq!(hash_bytes(b"abc"), hash_bytes(b"abc"));
        assert_ne!(hash_bytes(b"abc"), hash_bytes(b"abd"));
        // sha256 of empty input, a fixed reference value
        assert_eq!(
            hash_bytes(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        let v1 = serde_json::json!({"a": 1});
        let v2 = serde_json::json!({"a": 2});
        assert_ne!(hash_json(&v1).unwrap(), hash_json(&v2).unwrap());
    }

    #[test]
    fn freshly_initialized_mlp_is_reused_not_trusted() {
        // read_checkpoint must overwrite every parameter of the placeholder
        // networks, including biases
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut model = sample_model(8);
        // make biases nonzero so the overwrite is observable
        let mut p = model.params_flat();
        for v in p.iter_mut() {
            *v += 0.123;
        }
        model.set_params_flat(&p);
        write_checkpoint(&path, &model, &LossWeights::neural_field(), 1, "x").unwrap();
        let (_, back) = read_checkpoint(&path).unwrap();
        assert_eq!(back.params_flat(), p);
        // placeholder init with a different seed must not leak through
        let fresh = Mlp::init(&model.phi1.layer_sizes, Activation::Elu, 999).unwrap();
        let mut fresh_flat = Vec::new();
        fresh.push_flat(&mut fresh_flat);
        assert_ne!(&fresh_flat[..], &p[..fresh_flat.len()]);
        let _ = Array1::<f64>::zeros(1);
    }
}
