//! On-disk formats.
//!
//! - images: 8-bit RGB PNG
//! - points: CSV rows `x,y[,class]`, header optional
//! - tri-state maps: 8-bit gray PNG holding 0, 1 or 255
//! - repel maps: 16-bit gray PNG scaled by 65535, plus a JSON sidecar with the parameters
//! - instance masks: 16-bit gray PNG of ids
//! - detections: CSV `x,y,score`
//! - everything else: pretty JSON

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{Provenance, Sample};
use crate::encode::{RepelMap, RepelParams, TriState, TriStateLabelMap};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::points::{validation_problems, Point, PointSet};
use crate::post::{Detection, InstanceMask};

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    match img {
        image::DynamicImage::ImageRgb8(rgb) => Ok(rgb),
        other => Err(Error::InvalidInput(format!(
            "{}: expected 8-bit RGB, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

pub fn write_rgb_png(path: &Path, image: &RgbImage) -> Result<()> {
    create(path)?;
    image
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

fn parse_coord(field: Option<&str>) -> Option<f64> {
    field.and_then(|s| s.trim().parse::<f64>().ok())
}

/// Reads `x,y[,class]` rows. A first row whose coordinates do not parse is taken as a header.
/// Every malformed, out-of-bounds or duplicate row is reported at once.
pub fn read_points_csv(path: &Path, dims: (usize, usize)) -> Result<PointSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let mut points = Vec::new();
    let mut problems = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let x = parse_coord(record.get(0));
        let y = parse_coord(record.get(1));
        match (x, y) {
            (Some(x), Some(y)) if record.len() <= 3 => {
                let class = record.get(2).filter(|c| !c.is_empty()).map(str::to_owned);
                points.push(Point { x, y, class });
                rows.push(i + 1);
            }
            _ if i == 0 => {}
            _ => problems.push(format!("line {}: expected `x,y[,class]`", i + 1)),
        }
    }
    // validation reports positions within `points`; translate them back to file lines
    for p in validation_problems(&points, dims) {
        problems.push(relabel_rows(&p, &rows));
    }
    if !problems.is_empty() {
        return Err(Error::InvalidPoints {
            path: path.to_path_buf(),
            problems,
        });
    }
    Ok(PointSet::from_trusted(points))
}

fn relabel_rows(problem: &str, rows: &[usize]) -> String {
    let (head, tail) = problem.split_once(':').unwrap_or((problem, ""));
    let head = head
        .split(' ')
        .map(|tok| match tok.parse::<usize>() {
            Ok(n) if n >= 1 && n <= rows.len() => rows[n - 1].to_string(),
            _ => tok.replace("row", "line"),
        })
        .collect::<Vec<_>>()
        .join(" ");
    format!("{head}:{tail}")
}

pub fn write_points_csv(path: &Path, points: &PointSet) -> Result<()> {
    let mut out = create(path)?;
    let has_class = points.iter().any(|p| p.class.is_some());
    let mut text = String::from(if has_class { "x,y,class\n" } else { "x,y\n" });
    for p in points {
        match (&p.class, has_class) {
            (Some(c), _) => text.push_str(&format!("{},{},{}\n", p.x, p.y, c)),
            (None, true) => text.push_str(&format!("{},{},\n", p.x, p.y)),
            (None, false) => text.push_str(&format!("{},{}\n", p.x, p.y)),
        }
    }
    out.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads image/point-file pairs. Real data carries no instance masks.
pub fn load_dataset(pairs: &[(PathBuf, PathBuf)]) -> Result<Vec<Sample>> {
    pairs
        .iter()
        .map(|(image_path, points_path)| {
            let image = read_rgb_png(image_path)?;
            let dims = (image.width() as usize, image.height() as usize);
            let points = read_points_csv(points_path, dims)?;
            let id = image_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| image_path.display().to_string());
            Ok(Sample {
                id,
                image,
                points,
                instances: None,
                provenance: Provenance::Files {
                    image: image_path.clone(),
                    points: points_path.clone(),
                },
            })
        })
        .collect()
}

pub fn write_tristate_png(path: &Path, labels: &TriStateLabelMap) -> Result<()> {
    let (w, h) = labels.dims();
    let raw: Vec<u8> = labels.labels().iter().map(|s| s.as_u8()).collect();
    let img = GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer matches dims");
    create(path)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

pub fn read_tristate_png(path: &Path) -> Result<TriStateLabelMap> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::InvalidInput(format!(
                "{}: expected 8-bit gray, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let states = gray
        .into_raw()
        .into_iter()
        .map(|v| {
            TriState::from_u8(v)
                .ok_or_else(|| Error::InvalidInput(format!("{}: label value {v} is not 0, 1 or 255", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TriStateLabelMap::new(Grid::from_vec(w, h, states)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepelSidecar {
    pub alpha: f64,
    pub r: f64,
    pub scale: f64,
}

fn gray16(values: impl Iterator<Item = u16>, dims: (usize, usize)) -> ImageBuffer<Luma<u16>, Vec<u16>> {
    ImageBuffer::from_raw(dims.0 as u32, dims.1 as u32, values.collect()).expect("buffer matches dims")
}

/// Writes the map as 16-bit PNG and `<path>.json` with the encoding parameters.
pub fn write_repel_png(path: &Path, map: &RepelMap, params: &RepelParams) -> Result<()> {
    let img = gray16(
        map.values.iter().map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16),
        map.dims(),
    );
    create(path)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))?;
    write_json(
        &path.with_extension("json"),
        &RepelSidecar {
            alpha: params.alpha,
            r: params.radius,
            scale: 65535.0,
        },
    )
}

pub fn write_instances_png(path: &Path, mask: &InstanceMask) -> Result<()> {
    if mask.count() > u16::MAX as usize {
        return Err(Error::InvalidInput(format!(
            "{} instances do not fit a 16-bit PNG",
            mask.count()
        )));
    }
    let img = gray16(mask.ids().iter().map(|&id| id as u16), mask.dims());
    create(path)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

pub fn read_instances_png(path: &Path) -> Result<InstanceMask> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let gray = img.into_luma16();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let ids: Vec<u32> = gray.into_raw().into_iter().map(u32::from).collect();
    let count = ids.iter().copied().max().unwrap_or(0);
    Ok(InstanceMask::from_ordered_ids(Grid::from_vec(w, h, ids)?, count))
}

/// Writes an 8-bit gray PNG of a probability map (0..1 scaled to 0..255).
pub fn write_probability_png(path: &Path, values: &Grid<f64>) -> Result<()> {
    let raw: Vec<u8> = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = GrayImage::from_raw(values.width() as u32, values.height() as u32, raw).expect("buffer matches dims");
    create(path)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

pub fn write_mask_png(path: &Path, mask: &Grid<bool>) -> Result<()> {
    let raw: Vec<u8> = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw).expect("buffer matches dims");
    create(path)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

pub fn write_detections_csv(path: &Path, detections: &[Detection]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(create(path)?);
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    for d in detections {
        writer.serialize(d).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_detections_csv(path: &Path) -> Result<Vec<Detection>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader.deserialize().map(|r| r.map_err(csv_err)).collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn points_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let a = read_points_csv(&write(dir.path(), "a.csv", "x,y,class\n1,2,pos\n3.5,4\n"), (10, 10)).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.as_slice()[0].class.as_deref(), Some("pos"));
        let b = read_points_csv(&write(dir.path(), "b.csv", "1,2\n"), (10, 10)).unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn point_errors_name_file_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "p.csv", "x,y\n1,1\n10,0\n1.2,0.9\n");
        let err = read_points_csv(&path, (10, 10)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("lines 2 and 4"), "{msg}");
    }

    #[test]
    fn round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let labels = TriStateLabelMap::new(Grid::from_fn(5, 3, |x, _| match x % 3 {
            0 => TriState::Background,
            1 => TriState::Foreground,
            _ => TriState::Ignored,
        }));
        let p = dir.path().join("t.png");
        write_tristate_png(&p, &labels).unwrap();
        assert_eq!(read_tristate_png(&p).unwrap(), labels);

        let mask = InstanceMask::from_ids(Grid::from_fn(6, 4, |x, y| ((x / 2 + y) % 4) as u32));
        let p = dir.path().join("i.png");
        write_instances_png(&p, &mask).unwrap();
        assert_eq!(read_instances_png(&p).unwrap(), mask);

        let dets = vec![Detection {
            x: 1.0,
            y: 2.0,
            score: 0.75,
        }];
        let p = dir.path().join("d.csv");
        write_detections_csv(&p, &dets).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "x,y,score\n1.0,2.0,0.75\n");
        assert_eq!(read_detections_csv(&p).unwrap(), dets);

        let pts = PointSet::new(vec![Point::with_class(1.5, 2.0, "a"), Point::new(3.0, 3.0)], (5, 5)).unwrap();
        let p = dir.path().join("p.csv");
        write_points_csv(&p, &pts).unwrap();
        assert_eq!(read_points_csv(&p, (5, 5)).unwrap(), pts);
    }
}
