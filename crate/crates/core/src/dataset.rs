//! Aligned measurement/ground-truth datasets: CSV persistence, train/test
//! splitting, and residual-sample extraction.
//!
//! On-disk layout is a pair of CSVs — measurements
//! (`t,imu_id,gx,gy,gz,ax,ay,az`, one row per IMU per instant) and ground
//! truth (`t,y_gt,z_gt,theta_gt,theta_1_gt,...`) — plus an optional
//! `*_meta.json` sidecar carrying provenance. Floats are written as
//! shortest round-trip decimals, so save/load is lossless.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::Pose2D;
use crate::corrector::ResidualSample;
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::real::Real;
use crate::synth::{ImuSample, ImuTrace, SimOutput};

/// Where a dataset came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario: String,
    pub payload: String,
    pub seed: u64,
    pub config_hash: String,
}

/// Measurements and ground truth on one uniform time base.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset<T = f64> {
    pub sample_period: T,
    pub imu_traces: Vec<ImuTrace<T>>,
    pub gt_pose: Vec<Pose2D<T>>,
    /// Per-joint true angles, `gt_joints[joint][sample]`.
    pub gt_joints: Option<Vec<Vec<T>>>,
    pub provenance: Provenance,
}

const UNIFORMITY_TOL: f64 = 1e-9;

impl<T: Real> AlignedDataset<T> {
    pub fn new(
        sample_period: T,
        imu_traces: Vec<ImuTrace<T>>,
        gt_pose: Vec<Pose2D<T>>,
        gt_joints: Option<Vec<Vec<T>>>,
        provenance: Provenance,
    ) -> Result<Self> {
        let ds = Self {
            sample_period,
            imu_traces,
            gt_pose,
            gt_joints,
            provenance,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn from_sim(sim: SimOutput<T>, provenance: Provenance) -> Result<Self> {
        Self::new(
            sim.sample_period,
            sim.traces,
            sim.gt_pose,
            Some(sim.gt_joints.angles),
            provenance,
        )
    }

    pub fn len(&self) -> usize {
        self.gt_pose.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt_pose.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.imu_traces.is_empty() {
            return Err(Error::InvalidArgument("dataset has no imu traces".into()));
        }
        if !(self.sample_period > T::zero()) {
            return Err(Error::InvalidArgument(
                "sample period must be positive".into(),
            ));
        }
        let n = self.len();
        for tr in &self.imu_traces {
            if tr.len() != n {
                return Err(Error::LengthMismatch {
                    what: "imu trace length",
                    expected: n,
                    got: tr.len(),
                });
            }
            if let Some(first) = tr.samples.first() {
                let t0 = first.t.as_f64();
                let ts = self.sample_period.as_f64();
                for (k, s) in tr.samples.iter().enumerate() {
                    let expected = t0 + k as f64 * ts;
                    if (s.t.as_f64() - expected).abs() > UNIFORMITY_TOL {
                        return Err(Error::InvalidArgument(format!(
                            "imu {} sample {k}: non-uniform timestamp",
                            tr.imu_id
                        )));
                    }
                }
            }
        }
        if let Some(joints) = &self.gt_joints {
            for (j, col) in joints.iter().enumerate() {
                if col.len() != n {
                    return Err(Error::LengthMismatch {
                        what: "ground-truth joint trace",
                        expected: n,
                        got: col.len(),
                    });
                }
                let _ = j;
            }
        }
        Ok(())
    }

    /// First `floor(ratio * len)` samples vs the rest.
    pub fn split_chronological(&self, ratio: f64) -> Result<(Self, Self)> {
        let (head, _) = split_indices(self.len(), ratio, SplitMode::Chronological)?;
        let cut = head.len();
        let take = |range: core::ops::Range<usize>| -> Self {
            Self {
                sample_period: self.sample_period,
                imu_traces: self
                    .imu_traces
                    .iter()
                    .map(|tr| ImuTrace {
                        imu_id: tr.imu_id,
                        samples: tr.samples[range.clone()].to_vec(),
                    })
                    .collect(),
                gt_pose: self.gt_pose[range.clone()].to_vec(),
                gt_joints: self
                    .gt_joints
                    .as_ref()
                    .map(|js| js.iter().map(|col| col[range.clone()].to_vec()).collect()),
                provenance: self.provenance.clone(),
            }
        };
        Ok((take(0..cut), take(cut..self.len())))
    }

    fn measurements_path(dir: &Path, base: &str) -> PathBuf {
        dir.join(format!("{base}_measurements.csv"))
    }

    fn ground_truth_path(dir: &Path, base: &str) -> PathBuf {
        dir.join(format!("{base}_groundtruth.csv"))
    }

    fn meta_path(dir: &Path, base: &str) -> PathBuf {
        dir.join(format!("{base}_meta.json"))
    }

    /// Writes `{base}_measurements.csv`, `{base}_groundtruth.csv`, and
    /// `{base}_meta.json` under `dir`; returns the two CSV paths.
    pub fn save(&self, dir: &Path, base: &str) -> Result<(PathBuf, PathBuf)> {
        let m_path = Self::measurements_path(dir, base);
        let g_path = Self::ground_truth_path(dir, base);
        write_measurements_csv(&m_path, &self.imu_traces)?;
        write_ground_truth_csv(&g_path, &self.imu_traces, &self.gt_pose, self.gt_joints.as_deref())?;

        let meta_path = Self::meta_path(dir, base);
        let meta = DatasetMeta {
            schema: SCHEMA.to_string(),
            sample_period: self.sample_period.as_f64(),
            imu_count: self.imu_traces.len(),
            sample_count: self.len(),
            provenance: self.provenance.clone(),
        };
        let file = File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, &meta)
            .map_err(|e| Error::io(&meta_path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
        w.write_all(b"\n").map_err(|e| Error::io(&meta_path, e))?;
        Ok((m_path, g_path))
    }

    /// Loads a dataset saved by [`AlignedDataset::save`] (or any files in the
    /// same schema). A `*_meta.json` next to the measurements file restores
    /// provenance when present.
    pub fn load(measurements: &Path, ground_truth: &Path) -> Result<Self> {
        let traces = read_measurements_csv(measurements)?;
        let (gt_pose, gt_joints) = read_ground_truth_csv(ground_truth)?;
        let n = gt_pose.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let first = traces
            .first()
            .ok_or_else(|| Error::InvalidArgument("no imu rows".into()))?;
        if first.len() < 2 {
            return Err(Error::InvalidArgument(
                "need at least two samples to infer the sample period".into(),
            ));
        }
        let ts = first.samples[1].t - first.samples[0].t;

        let mut provenance = Provenance::default();
        if let Some(meta_path) = sibling_meta(measurements) {
            if meta_path.exists() {
                let file = File::open(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
                let meta: DatasetMeta = serde_json::from_reader(BufReader::new(file)).map_err(
                    |e| Error::io(&meta_path, std::io::Error::new(std::io::ErrorKind::Other, e)),
                )?;
                provenance = meta.provenance;
            }
        }
        Self::new(ts, traces, gt_pose, gt_joints, provenance)
    }
}

const SCHEMA: &str = "flexkin-dataset-v1";

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    schema: String,
    sample_period: f64,
    imu_count: usize,
    sample_count: usize,
    provenance: Provenance,
}

fn sibling_meta(measurements: &Path) -> Option<PathBuf> {
    let name = measurements.file_name()?.to_str()?;
    let base = name.strip_suffix("_measurements.csv")?;
    Some(measurements.with_file_name(format!("{base}_meta.json")))
}

/// Writes aligned IMU traces as one measurement CSV; free-function form of
/// the dataset export (see [`AlignedDataset::save`] for the full trio).
pub fn export_dataset<T: Real>(
    traces: &[ImuTrace<T>],
    gt_pose: &[Pose2D<T>],
    gt_joints: Option<&[Vec<T>]>,
    dir: &Path,
    base: &str,
) -> Result<(PathBuf, PathBuf)> {
    let m_path = dir.join(format!("{base}_measurements.csv"));
    let g_path = dir.join(format!("{base}_groundtruth.csv"));
    write_measurements_csv(&m_path, traces)?;
    write_ground_truth_csv(&g_path, traces, gt_pose, gt_joints)?;
    Ok((m_path, g_path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn write_measurements_csv<T: Real>(path: &Path, traces: &[ImuTrace<T>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io_err = |e: csv::Error| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e));
    w.write_record(["t", "imu_id", "gx", "gy", "gz", "ax", "ay", "az"])
        .map_err(io_err)?;
    let n = traces.first().map_or(0, |tr| tr.len());
    for k in 0..n {
        for tr in traces {
            let s = &tr.samples[k];
            w.write_record([
                s.t.to_string(),
                tr.imu_id.to_string(),
                s.gyro.x.to_string(),
                s.gyro.y.to_string(),
                s.gyro.z.to_string(),
                s.accel.x.to_string(),
                s.accel.y.to_string(),
                s.accel.z.to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_ground_truth_csv<T: Real>(
    path: &Path,
    traces: &[ImuTrace<T>],
    gt_pose: &[Pose2D<T>],
    gt_joints: Option<&[Vec<T>]>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io_err = |e: csv::Error| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e));
    let mut header = vec![
        "t".to_string(),
        "y_gt".to_string(),
        "z_gt".to_string(),
        "theta_gt".to_string(),
    ];
    if let Some(joints) = gt_joints {
        for j in 1..=joints.len() {
            header.push(format!("theta_{j}_gt"));
        }
    }
    w.write_record(&header).map_err(io_err)?;
    for (k, pose) in gt_pose.iter().enumerate() {
        let t = traces
            .first()
            .map(|tr| tr.samples[k].t.to_string())
            .unwrap_or_else(|| "0".to_string());
        let mut row = vec![
            t,
            pose.y.to_string(),
            pose.z.to_string(),
            pose.theta.to_string(),
        ];
        if let Some(joints) = gt_joints {
            for col in joints {
                row.push(col[k].to_string());
            }
        }
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn parse_field<T: Real>(path: &Path, line: usize, raw: &str) -> Result<T> {
    raw.trim().parse::<T>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("cannot parse number from {raw:?}"),
    })
}

fn read_measurements_csv<T: Real>(path: &Path) -> Result<Vec<ImuTrace<T>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut per_imu: Vec<Vec<ImuSample<T>>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if record.len() != 8 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected 8 fields, got {}", record.len()),
            });
        }
        let t = parse_field::<T>(path, line, &record[0])?;
        let imu_id: usize = record[1].trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("bad imu_id {:?}", &record[1]),
        })?;
        let v = |i: usize| parse_field::<T>(path, line, &record[i]);
        let sample = ImuSample {
            t,
            gyro: Vec3::new(v(2)?, v(3)?, v(4)?),
            accel: Vec3::new(v(5)?, v(6)?, v(7)?),
        };
        if imu_id >= per_imu.len() {
            per_imu.resize_with(imu_id + 1, Vec::new);
        }
        per_imu[imu_id].push(sample);
    }
    per_imu
        .into_iter()
        .enumerate()
        .map(|(id, samples)| ImuTrace::new(id, samples))
        .collect()
}

type GroundTruth<T> = (Vec<Pose2D<T>>, Option<Vec<Vec<T>>>);

fn read_ground_truth_csv<T: Real>(path: &Path) -> Result<GroundTruth<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let joint_cols = headers.len().saturating_sub(4);
    let mut poses = Vec::new();
    let mut joints: Vec<Vec<T>> = vec![Vec::new(); joint_cols];
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!(
                    "expected {} fields, got {}",
                    headers.len(),
                    record.len()
                ),
            });
        }
        let v = |i: usize| parse_field::<T>(path, line, &record[i]);
        poses.push(Pose2D {
            y: v(1)?,
            z: v(2)?,
            theta: v(3)?,
        });
        for (j, col) in joints.iter_mut().enumerate() {
            col.push(v(4 + j)?);
        }
    }
    Ok((poses, if joint_cols > 0 { Some(joints) } else { None }))
}

/// How to partition samples into train and test sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    Chronological,
    Shuffled { seed: u64 },
}

/// Disjoint, exhaustive index partition. The train side holds
/// `floor(ratio * n)` indices; both sides are sorted.
pub fn split_indices(n: usize, ratio: f64, mode: SplitMode) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio {ratio} outside (0, 1)"
        )));
    }
    let cut = ((ratio * n as f64) + 1e-9).floor() as usize;
    let cut = cut.min(n);
    match mode {
        SplitMode::Chronological => Ok(((0..cut).collect(), (cut..n).collect())),
        SplitMode::Shuffled { seed } => {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            order.shuffle(&mut rng);
            let mut train: Vec<usize> = order[..cut].to_vec();
            let mut test: Vec<usize> = order[cut..].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            Ok((train, test))
        }
    }
}

/// Splits a sample slice by [`split_indices`].
pub fn split_samples<S: Clone>(
    items: &[S],
    ratio: f64,
    mode: SplitMode,
) -> Result<(Vec<S>, Vec<S>)> {
    let (train, test) = split_indices(items.len(), ratio, mode)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok((pick(&train), pick(&test)))
}

/// Pairs an estimated pose trace with ground truth into residual samples.
pub fn residual_samples<T: Real>(
    estimates: &[Pose2D<T>],
    ground_truth: &[Pose2D<T>],
) -> Result<Vec<ResidualSample<T>>> {
    if estimates.len() != ground_truth.len() {
        return Err(Error::LengthMismatch {
            what: "pose traces",
            expected: ground_truth.len(),
            got: estimates.len(),
        });
    }
    Ok(estimates
        .iter()
        .zip(ground_truth)
        .map(|(e, g)| ResidualSample::from_poses(*e, *g))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{simulate, ImuErrorModel, JointTrajectory, SimScenario};
    use crate::SegmentChain;

    fn small_dataset() -> AlignedDataset<f64> {
        let chain = SegmentChain::new(vec![1.0, 0.8], Vec3::from_f64([0.0, 0.0, -9.81])).unwrap();
        let sc = SimScenario {
            joints: vec![
                JointTrajectory::sinusoid(0.3, 0.7),
                JointTrajectory::sinusoid(0.2, 0.9),
            ],
            duration: 0.05,
            sample_period: 0.001,
            payload_tag: "unit".into(),
            ripple: None,
        };
        let errors = vec![
            ImuErrorModel {
                gyro_noise_std: 0.002,
                accel_noise_std: 0.02,
                seed: 3,
                ..ImuErrorModel::ideal()
            };
            3
        ];
        AlignedDataset::from_sim(
            simulate(&chain, &sc, &errors).unwrap(),
            Provenance {
                scenario: "unit".into(),
                payload: "0kg".into(),
                seed: 3,
                config_hash: "abc".into(),
            },
        )
        .unwrap()
    }

    #[test]
    fn save_load_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small_dataset();
        let (m, g) = ds.save(dir.path(), "unit").unwrap();
        let back = AlignedDataset::<f64>::load(&m, &g).unwrap();
        assert_eq!(back.len(), ds.len());
        assert_eq!(back.provenance, ds.provenance);
        for (a, b) in ds.imu_traces.iter().zip(&back.imu_traces) {
            for (x, y) in a.samples.iter().zip(&b.samples) {
                assert_eq!(x.t.to_bits(), y.t.to_bits());
                assert_eq!(x.gyro.x.to_bits(), y.gyro.x.to_bits());
                assert_eq!(x.gyro.y.to_bits(), y.gyro.y.to_bits());
                assert_eq!(x.gyro.z.to_bits(), y.gyro.z.to_bits());
                assert_eq!(x.accel.x.to_bits(), y.accel.x.to_bits());
                assert_eq!(x.accel.y.to_bits(), y.accel.y.to_bits());
                assert_eq!(x.accel.z.to_bits(), y.accel.z.to_bits());
            }
        }
        for (a, b) in ds.gt_pose.iter().zip(&back.gt_pose) {
            assert_eq!(a.y.to_bits(), b.y.to_bits());
            assert_eq!(a.z.to_bits(), b.z.to_bits());
            assert_eq!(a.theta.to_bits(), b.theta.to_bits());
        }
        let ja = ds.gt_joints.as_ref().unwrap();
        let jb = back.gt_joints.as_ref().unwrap();
        for (ca, cb) in ja.iter().zip(jb) {
            for (x, y) in ca.iter().zip(cb) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn empty_export_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let traces = vec![ImuTrace::<f64>::new(0, Vec::new()).unwrap()];
        let (m, _g) =
            export_dataset(&traces, &[], None, dir.path(), "empty").unwrap();
        let text = std::fs::read_to_string(m).unwrap();
        assert_eq!(text.trim(), "t,imu_id,gx,gy,gz,ax,ay,az");
    }

    #[test]
    fn chronological_split_is_first_seven_last_three() {
        let (train, test) = split_indices(10, 0.7, SplitMode::Chronological).unwrap();
        assert_eq!(train, (0..7).collect::<Vec<_>>());
        assert_eq!(test, (7..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_boundary_uses_floor_rule() {
        let (train, test) = split_indices(10, 0.999, SplitMode::Chronological).unwrap();
        assert_eq!(train.len(), 9);
        assert_eq!(test.len(), 1);
    }

    #[test]
    fn shuffled_split_is_reproducible_and_exhaustive() {
        let (a_train, a_test) = split_indices(100, 0.7, SplitMode::Shuffled { seed: 12 }).unwrap();
        let (b_train, b_test) = split_indices(100, 0.7, SplitMode::Shuffled { seed: 12 }).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        let mut all: Vec<usize> = a_train.iter().chain(&a_test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (c_train, _) = split_indices(100, 0.7, SplitMode::Shuffled { seed: 13 }).unwrap();
        assert_ne!(a_train, c_train);
    }

    #[test]
    fn split_rejects_empty_and_bad_ratio() {
        assert!(split_indices(0, 0.7, SplitMode::Chronological).is_err());
        assert!(split_indices(10, 0.0, SplitMode::Chronological).is_err());
        assert!(split_indices(10, 1.0, SplitMode::Chronological).is_err());
    }

    #[test]
    fn dataset_chronological_split_keeps_alignment() {
        let ds = small_dataset();
        let (train, test) = ds.split_chronological(0.7).unwrap();
        assert_eq!(train.len() + test.len(), ds.len());
        assert_eq!(train.len(), (0.7 * ds.len() as f64).floor() as usize);
        assert_eq!(train.imu_traces.len(), ds.imu_traces.len());
        assert_eq!(
            test.imu_traces[0].samples[0].t,
            ds.imu_traces[0].samples[train.len()].t
        );
    }

    #[test]
    fn residual_samples_wrap_theta() {
        let est = vec![Pose2D::new(1.0, 0.0, 3.1)];
        let gt = vec![Pose2D::new(1.0, 0.0, -3.1)];
        let rs = residual_samples(&est, &gt).unwrap();
        let expected = 2.0 * core::f64::consts::PI - 6.2;
        assert!((rs[0].delta[2] - expected).abs() < 1e-12);
    }
}
