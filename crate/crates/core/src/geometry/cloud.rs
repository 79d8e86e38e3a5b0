//! Point-cloud CSV: `x1,x2,x3,region,nx,ny,nz`, one point per row.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{is_unit, BoundaryPoint, PointCloud, Region};
use crate::{Error, Real, Result};

const HEADER: [&str; 7] = ["x1", "x2", "x3", "region", "nx", "ny", "nz"];

/// Writes interior rows first, then boundary rows. Coordinates use the
/// shortest representation that parses back to the same `f64`.
pub fn write_point_cloud<F: Real, W: Write>(cloud: &PointCloud<F>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let ser = |e: csv::Error| Error::Serde(e.to_string());
    w.write_record(HEADER).map_err(ser)?;
    let f = |v: F| format!("{:?}", v.to_f64_lossy());
    for x in &cloud.interior {
        w.write_record([
            f(x[0]),
            f(x[1]),
            f(x[2]),
            "interior".into(),
            f(F::zero()),
            f(F::zero()),
            f(F::zero()),
        ])
        .map_err(ser)?;
    }
    for b in &cloud.boundary {
        let n = if b.region == Region::Neumann {
            b.normal
        } else {
            [F::zero(); 3]
        };
        w.write_record([
            f(b.x[0]),
            f(b.x[1]),
            f(b.x[2]),
            b.region.name().into(),
            f(n[0]),
            f(n[1]),
            f(n[2]),
        ])
        .map_err(ser)?;
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))?;
    Ok(())
}

pub fn save_point_cloud<F: Real>(cloud: &PointCloud<F>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_point_cloud(cloud, file)
}

/// Parses a point cloud; `path` is used for error messages only.
pub fn read_point_cloud<F: Real, R: Read>(input: R, path: &Path) -> Result<PointCloud<F>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = r.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(parse_err(1, format!("expected header `{}`", HEADER.join(","))));
    }
    let mut cloud = PointCloud::default();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 7 {
            return Err(parse_err(line, format!("expected 7 fields, found {}", rec.len())));
        }
        let num = |i: usize| -> Result<F> {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(F::lit)
                .ok_or_else(|| parse_err(line, format!("bad number `{}` in column {}", &rec[i], HEADER[i])))
        };
        let x = [num(0)?, num(1)?, num(2)?];
        let region: Region = rec[3].parse().map_err(|m| parse_err(line, m))?;
        let normal = [num(4)?, num(5)?, num(6)?];
        match region {
            Region::Interior => cloud.interior.push(x),
            Region::Dirichlet => cloud.boundary.push(BoundaryPoint {
                x,
                normal: [F::zero(); 3],
                region,
            }),
            Region::Neumann => {
                if !is_unit(&normal) {
                    return Err(parse_err(
                        line,
                        format!(
                            "Neumann normal {:?} is not unit length",
                            normal.map(|v| v.to_f64_lossy())
                        ),
                    ));
                }
                cloud.boundary.push(BoundaryPoint { x, normal, region });
            }
        }
    }
    Ok(cloud)
}

pub fn load_point_cloud<F: Real>(path: &Path) -> Result<PointCloud<F>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_point_cloud(file, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PointCloud<f64>> {
        read_point_cloud(text.as_bytes(), Path::new("test.csv"))
    }

    #[test]
    fn minimal_file() {
        let cloud = parse(
            "x1,x2,x3,region,nx,ny,nz\n\
             0.5,0.5,0.5,interior,0,0,0\n\
             0,0.5,0.5,dirichlet,0,0,0\n\
             1,0.5,0.5,neumann,1,0,0\n",
        )
        .unwrap();
        assert_eq!(cloud.count(Region::Interior), 1);
        assert_eq!(cloud.count(Region::Dirichlet), 1);
        assert_eq!(cloud.count(Region::Neumann), 1);
    }

    #[test]
    fn non_unit_normal_names_line() {
        let err = parse(
            "x1,x2,x3,region,nx,ny,nz\n\
             0.5,0.5,0.5,interior,0,0,0\n\
             1,0.5,0.5,neumann,0,0,2\n",
        )
        .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(
            parse("x1,x2,x3,region,nx,ny,nz\n0.5,abc,0.5,interior,0,0,0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("x1,x2,x3,region,nx,ny,nz\n0.5,0.5,0.5,inside,0,0,0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("x1,x2,x3,region,nx,ny,nz\n0.5,0.5\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse("a,b\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cloud = PointCloud {
            interior: vec![[0.1, 1.0 / 3.0, 1e-9 * std::f64::consts::PI]],
            boundary: vec![
                BoundaryPoint {
                    x: [0.0, 2.0f64.sqrt(), 7.0e-300],
                    normal: [0.0; 3],
                    region: Region::Dirichlet,
                },
                BoundaryPoint {
                    x: [1.0, 0.7, 0.2],
                    normal: [0.6, 0.8, 0.0],
                    region: Region::Neumann,
                },
            ],
        };
        let mut buf = Vec::new();
        write_point_cloud(&cloud, &mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, cloud);
    }
}
