//! JSON world files: `{version, n, workspace: {r0}, obstacles, destination}`.

use std::path::Path;

use conenav::world::{validate, ValidationReport};
use conenav::{Obstacle, Point, World};
use serde::{Deserialize, Serialize};

pub const WORLD_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceSpec {
    pub r0: f64,
}

/// On-disk form of a world and its destination. Obstacles are tagged by
/// `type` (`disc`, `ellipse`, `polygon`, `rounded_polygon`); angles are in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub version: u32,
    pub n: usize,
    pub workspace: WorkspaceSpec,
    pub obstacles: Vec<Obstacle>,
    pub destination: Point,
}

/// A world file that cannot describe a valid world.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InvalidWorld(pub String);

impl WorldFile {
    pub fn new(world: &World, destination: &Point) -> WorldFile {
        WorldFile {
            version: WORLD_FILE_VERSION,
            n: world.dim,
            workspace: WorkspaceSpec { r0: world.r0() },
            obstacles: world.obstacles.clone(),
            destination: destination.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<WorldFile, InvalidWorld> {
        let file: WorldFile = serde_json::from_str(text).map_err(|e| InvalidWorld(format!("world file: {e}")))?;
        if file.version != WORLD_FILE_VERSION {
            return Err(InvalidWorld(format!("world file version {} (expected {WORLD_FILE_VERSION})", file.version)));
        }
        if file.destination.dim() != file.n {
            return Err(InvalidWorld(format!(
                "destination has {} coordinates, n = {}",
                file.destination.dim(),
                file.n
            )));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> anyhow::Result<WorldFile> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        Ok(WorldFile::from_json(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world files serialize")
    }

    /// The world without checking the navigation assumptions.
    pub fn world(&self) -> Result<World, InvalidWorld> {
        World::new(self.n, self.workspace.r0, self.obstacles.clone()).map_err(|e| InvalidWorld(e.to_string()))
    }

    pub fn report(&self) -> Result<ValidationReport, InvalidWorld> {
        Ok(validate(&self.world()?, Some(&self.destination)))
    }

    /// The world, provided it passes validation against the destination.
    pub fn valid_world(&self) -> Result<World, InvalidWorld> {
        let world = self.world()?;
        let report = validate(&world, Some(&self.destination));
        if !report.ok {
            let json = serde_json::to_string(&report.violations).unwrap_or_default();
            return Err(InvalidWorld(format!("world violates the navigation assumptions: {json}")));
        }
        Ok(world)
    }
}
