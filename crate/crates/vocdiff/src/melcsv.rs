//! Mel grids as CSV: one row per band, one column per frame, log-amplitude
//! values.

use std::fs;
use std::path::Path;

use vocdiff_core::mel::MelGrid;

use crate::error::{AppError, AppResult};

pub fn write_mel_csv(path: &Path, grid: &MelGrid) -> AppResult<()> {
    let mut out = String::new();
    for b in 0..grid.num_bands {
        let row: Vec<String> = (0..grid.num_frames)
            .map(|f| grid.at(b, f).to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| AppError::Io(format!("write {}: {e}", path.display())))?;
    Ok(())
}

pub fn read_mel_csv(path: &Path) -> AppResult<MelGrid> {
    let text =
        fs::read_to_string(path).map_err(|e| AppError::Io(format!("read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            AppError::Config(format!("{}:{}: bad number: {e}", path.display(), ln + 1))
        })?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(AppError::Config(format!(
                    "{}:{}: ragged row ({} vs {} columns)",
                    path.display(),
                    ln + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(AppError::Config(format!("{}: empty mel csv", path.display())));
    }
    let num_bands = rows.len();
    let num_frames = rows[0].len();
    let mut grid = MelGrid::new(num_bands, num_frames);
    for (b, row) in rows.iter().enumerate() {
        for (f, &v) in row.iter().enumerate() {
            grid.set(b, f, v);
        }
    }
    Ok(grid)
}
