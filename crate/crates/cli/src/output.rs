use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use stereotac::imaging_io::{
    write_atomic, write_floatmap, write_image, write_pointcloud, write_report, FloatMap, ImageRGB8,
    PointCloud3D, ReportFormat, ReportTable,
};

use crate::config::RunConfig;

/// Output directory for one run.
pub struct OutDir {
    root: PathBuf,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)
            .with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn image(&self, name: &str, img: &ImageRGB8) -> Result<()> {
        write_image(img, &self.path(name)).with_context(|| format!("writing {name}"))
    }

    pub fn floatmap(&self, name: &str, map: &FloatMap) -> Result<()> {
        write_floatmap(map, &self.path(name)).with_context(|| format!("writing {name}"))
    }

    pub fn cloud(&self, name: &str, cloud: &PointCloud3D) -> Result<()> {
        write_pointcloud(cloud, &self.path(name)).with_context(|| format!("writing {name}"))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        write_atomic(&self.path(name), text.as_bytes()).with_context(|| format!("writing {name}"))
    }

    pub fn text(&self, name: &str, text: &str) -> Result<()> {
        write_atomic(&self.path(name), text.as_bytes()).with_context(|| format!("writing {name}"))
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn report(&self, stem: &str, table: &ReportTable) -> Result<()> {
        write_report(table, &self.path(&format!("{stem}.csv")), ReportFormat::Csv)?;
        write_report(
            table,
            &self.path(&format!("{stem}.json")),
            ReportFormat::Json,
        )?;
        Ok(())
    }

    /// `run.json`: command, seed and the effective configuration.
    pub fn sidecar(&self, command: &str, seed: u64, config: &RunConfig) -> Result<()> {
        let sidecar = Sidecar {
            tool: "stereotac",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config,
        };
        self.json("run.json", &sidecar)
    }
}
