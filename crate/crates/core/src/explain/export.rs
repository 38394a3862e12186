use std::io::Write;
use std::path::Path;

use super::AttributionMap;
use crate::error::{Error, Result};

/// CSV of the map: header `t,d0,d1,...`, then one row per timestamp.
pub fn map_to_csv(map: &AttributionMap) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((0..map.dims()).map(|d| format!("d{d}")));
    w.write_record(&header)?;
    for (t, row) in map.values.data().chunks(map.dims()).enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Binary PPM (P6) heatmap with time along x and one pixel row per
/// variable. A value `v` becomes `(255, round(255(1-v)), round(255(1-v)))`:
/// white at 0, red at 1.
pub fn map_to_ppm(map: &AttributionMap) -> Vec<u8> {
    let (t, d) = (map.length(), map.dims());
    let mut out = format!("P6\n{t} {d}\n255\n").into_bytes();
    for di in 0..d {
        for ti in 0..t {
            let v = map.at(ti, di).clamp(0.0, 1.0);
            let fade = (255.0 * (1.0 - v)).round() as u8;
            out.extend([255, fade, fade]);
        }
    }
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn write_map_csv(map: &AttributionMap, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &map_to_csv(map)?)
}

pub fn write_map_ppm(map: &AttributionMap, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &map_to_ppm(map))
}
