//! CSV and JSON persistence. CSV columns are matched by header name, so
//! column order is free; error messages carry the file line and column.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gof::{BrightnessData, BrightnessRecord, ProfileData, ProfileImage, ProfilePoint};
use crate::mce::{IdealPoint, SCurve};
use crate::shape::ShapeParams;

/// Allowed deviation of a direction column triple from unit length.
pub const UNIT_TOLERANCE: f64 = 1e-6;

pub const BRIGHTNESS_COLUMNS: [&str; 9] = [
    "epoch_time", "omega_x", "omega_y", "omega_z", "omega0_x", "omega0_y", "omega0_z", "L", "sigma",
];

pub const PROFILE_COLUMNS: [&str; 11] = [
    "image_id", "epoch_time", "omega_x", "omega_y", "omega_z", "omega0_x", "omega0_y", "omega0_z", "alpha_rad",
    "r_max", "sigma",
];

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

struct Columns<'a> {
    path: &'a Path,
    index: HashMap<&'static str, usize>,
}

impl<'a> Columns<'a> {
    fn new(path: &'a Path, reader: &mut csv::Reader<File>, required: &[&'static str]) -> Result<Self> {
        let headers = reader.headers()?.clone();
        let mut index = HashMap::new();
        for &name in required {
            let pos = headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                column: name.to_string(),
                message: "missing column".into(),
            })?;
            index.insert(name, pos);
        }
        Ok(Self { path, index })
    }

    fn get(&self, record: &csv::StringRecord, name: &'static str) -> Result<f64> {
        let line = record.position().map_or(0, |p| p.line());
        let raw = record.get(self.index[name]).unwrap_or("");
        let value: f64 = raw.parse().map_err(|_| Error::Parse {
            path: self.path.to_path_buf(),
            line,
            column: name.to_string(),
            message: format!("cannot parse `{raw}` as a number"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                path: self.path.to_path_buf(),
                line,
                column: name.to_string(),
                message: "value is not finite".into(),
            });
        }
        Ok(value)
    }

    fn direction(&self, record: &csv::StringRecord, prefix: &'static str) -> Result<Vector3<f64>> {
        let [x, y, z] = match prefix {
            "omega" => ["omega_x", "omega_y", "omega_z"],
            _ => ["omega0_x", "omega0_y", "omega0_z"],
        };
        let v = Vector3::new(self.get(record, x)?, self.get(record, y)?, self.get(record, z)?);
        if (v.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Parse {
                path: self.path.to_path_buf(),
                line: record.position().map_or(0, |p| p.line()),
                column: prefix.to_string(),
                message: format!("direction is not a unit vector (norm {})", v.norm()),
            });
        }
        Ok(v.normalize())
    }
}

pub fn parse_brightness_csv(path: impl AsRef<Path>) -> Result<BrightnessData> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let cols = Columns::new(path, &mut reader, &BRIGHTNESS_COLUMNS)?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        records.push(BrightnessRecord {
            time: cols.get(&row, "epoch_time")?,
            omega: cols.direction(&row, "omega")?,
            omega0: cols.direction(&row, "omega0")?,
            l_obs: cols.get(&row, "L")?,
            sigma: cols.get(&row, "sigma")?,
        });
    }
    let data = BrightnessData { records };
    data.validate()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(data)
}

/// Rows are grouped by `image_id` in order of first appearance and sorted by
/// angle within each image. Geometry columns must agree within an image.
pub fn parse_profile_csv(path: impl AsRef<Path>) -> Result<ProfileData> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let cols = Columns::new(path, &mut reader, &PROFILE_COLUMNS)?;
    let mut images: Vec<ProfileImage> = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let id_raw = cols.get(&row, "image_id")?;
        if id_raw < 0.0 || id_raw.fract() != 0.0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                column: "image_id".into(),
                message: "image id must be a non-negative integer".into(),
            });
        }
        let id = id_raw as usize;
        let time = cols.get(&row, "epoch_time")?;
        let omega = cols.direction(&row, "omega")?;
        let omega0 = cols.direction(&row, "omega0")?;
        let point = ProfilePoint {
            alpha: cols.get(&row, "alpha_rad")?,
            r_obs: cols.get(&row, "r_max")?,
            sigma: cols.get(&row, "sigma")?,
        };
        match images.iter_mut().find(|i| i.id == id) {
            Some(img) => {
                let same = (img.time - time).abs() <= 1e-12 * time.abs().max(1.0)
                    && (img.omega - omega).norm() <= UNIT_TOLERANCE
                    && (img.omega0 - omega0).norm() <= UNIT_TOLERANCE;
                if !same {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        column: "epoch_time".into(),
                        message: format!("geometry differs from earlier rows of image {id}"),
                    });
                }
                img.points.push(point);
            }
            None => images.push(ProfileImage {
                id,
                time,
                omega,
                omega0,
                points: vec![point],
            }),
        }
    }
    for img in &mut images {
        img.points.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    }
    let data = ProfileData { images };
    data.validate()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(data)
}

pub fn parse_shape_json(path: impl AsRef<Path>) -> Result<ShapeParams> {
    ShapeParams::load(path)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn create_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_brightness_csv(path: impl AsRef<Path>, data: &BrightnessData) -> Result<()> {
    let mut w = create_writer(path.as_ref())?;
    w.write_record(BRIGHTNESS_COLUMNS)?;
    for r in &data.records {
        w.write_record(
            [r.time, r.omega.x, r.omega.y, r.omega.z, r.omega0.x, r.omega0.y, r.omega0.z, r.l_obs, r.sigma].map(num),
        )?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn write_profile_csv(path: impl AsRef<Path>, data: &ProfileData) -> Result<()> {
    let mut w = create_writer(path.as_ref())?;
    w.write_record(PROFILE_COLUMNS)?;
    for img in &data.images {
        for p in &img.points {
            let mut row = vec![img.id.to_string()];
            row.extend(
                [
                    img.time, img.omega.x, img.omega.y, img.omega.z, img.omega0.x, img.omega0.y, img.omega0.z, p.alpha,
                    p.r_obs, p.sigma,
                ]
                .map(num),
            );
            w.write_record(row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Observed against modelled radii, one row per image and angle.
pub fn write_profile_fit_csv(path: impl AsRef<Path>, data: &ProfileData, model: &[Vec<f64>]) -> Result<()> {
    let mut w = create_writer(path.as_ref())?;
    w.write_record(["image_id", "alpha_rad", "r_obs", "r_model", "sigma"])?;
    for (img, radii) in data.images.iter().zip(model) {
        for (p, r) in img.points.iter().zip(radii) {
            w.write_record([img.id.to_string(), num(p.alpha), num(p.r_obs), num(*r), num(p.sigma)])?;
        }
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// S-curve rows: weights, raw mode values, rms deviations
/// `sqrt(χ²_i/N_i)`, log ratios to the ideal point, distance to it, and
/// the parameter vector.
pub fn write_scurve_csv<W: std::io::Write>(
    out: W,
    curve: &SCurve,
    ideal: &IdealPoint,
    n_points: &[usize],
) -> Result<()> {
    let n = ideal.chi2_0.len();
    let n_params = curve.points.first().map_or(0, |p| p.params.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..n).map(|i| format!("lambda_{i}")).collect();
    header.extend((1..=n).map(|i| format!("chi2_{i}")));
    header.extend((1..=n).map(|i| format!("d_{i}")));
    header.extend((1..=n).map(|i| format!("log_ratio_{i}")));
    header.push("dist_to_ideal".into());
    header.extend((0..n_params).map(|j| format!("p_{j}")));
    w.write_record(&header)?;
    for p in &curve.points {
        let mut row: Vec<String> = p.lambda.iter().copied().map(num).collect();
        row.extend(p.chi2.iter().copied().map(num));
        row.extend(
            p.chi2
                .iter()
                .zip(n_points)
                .map(|(c, &k)| num((c / k.max(1) as f64).sqrt())),
        );
        let ratios = ideal.log_ratios(&p.chi2);
        row.extend(ratios.iter().copied().map(num));
        row.push(num(ratios.iter().map(|r| r * r).sum::<f64>().sqrt()));
        row.extend(p.params.iter().copied().map(num));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<s-curve output>", e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
