//! Exit-code contract: 0 success, 1 domain error, 2 I/O or parse error.

use std::fmt;
use std::process::ExitCode;

use swarmskills_core::codec::CodecError;
use swarmskills_core::disclosure::LoadError;
use swarmskills_core::evolution::EvolutionError;
use swarmskills_core::governance::GovernanceError;
use swarmskills_core::simulation::SimulationError;
use swarmskills_core::trajectory::TrajectoryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Domain,
    Input,
}

impl Kind {
    pub fn exit_code(self) -> ExitCode {
        match self {
            Kind::Domain => ExitCode::from(1),
            Kind::Input => ExitCode::from(2),
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn domain(error: impl Into<anyhow::Error>) -> Self {
        CliError {
            kind: Kind::Domain,
            error: error.into(),
        }
    }

    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        CliError {
            kind: Kind::Input,
            error: error.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn codec_kind(e: &CodecError) -> Kind {
    match e {
        CodecError::DuplicateRoles(_) | CodecError::UnsafeRoleId(_) => Kind::Domain,
        _ => Kind::Input,
    }
}

fn trajectory_kind(e: &TrajectoryError) -> Kind {
    match e {
        TrajectoryError::Io { .. } | TrajectoryError::Line { .. } => Kind::Input,
        TrajectoryError::Codec(c) => codec_kind(c),
        _ => Kind::Domain,
    }
}

fn governance_kind(e: &GovernanceError) -> Kind {
    match e {
        GovernanceError::Io { .. } | GovernanceError::WriteRestored { .. } => Kind::Input,
        GovernanceError::Codec(c) => codec_kind(c),
        _ => Kind::Domain,
    }
}

fn simulation_kind(e: &SimulationError) -> Kind {
    match e {
        SimulationError::Scenario(_) | SimulationError::Io { .. } => Kind::Input,
        SimulationError::Trajectory { source, .. } => trajectory_kind(source),
        SimulationError::Codec(c) => codec_kind(c),
        SimulationError::Governance(g) => governance_kind(g),
        _ => Kind::Domain,
    }
}

macro_rules! classify {
    ($($ty:ty => $f:expr),* $(,)?) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                let kind = $f(&e);
                CliError { kind, error: e.into() }
            }
        }
    )*};
}

classify! {
    CodecError => codec_kind,
    TrajectoryError => trajectory_kind,
    GovernanceError => governance_kind,
    SimulationError => simulation_kind,
    LoadError => |_: &LoadError| Kind::Domain,
    EvolutionError => |_: &EvolutionError| Kind::Domain,
    std::io::Error => |_: &std::io::Error| Kind::Input,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn kinds() {
        let io = || std::io::Error::other("x");
        assert_eq!(
            CliError::from(CodecError::MissingSkillMd(PathBuf::new())).kind,
            Kind::Input
        );
        assert_eq!(
            CliError::from(CodecError::DuplicateRoles(vec![])).kind,
            Kind::Domain
        );
        assert_eq!(
            CliError::from(TrajectoryError::SkillNotLoaded("s".into())).kind,
            Kind::Domain
        );
        assert_eq!(
            CliError::from(GovernanceError::UnknownVersion {
                version: 9,
                available: vec![]
            })
            .kind,
            Kind::Domain
        );
        assert_eq!(
            CliError::from(SimulationError::Io {
                path: PathBuf::new(),
                source: io()
            })
            .kind,
            Kind::Input
        );
        assert_eq!(
            CliError::from(SimulationError::Scenario("bad".into())).kind,
            Kind::Input
        );
    }
}
