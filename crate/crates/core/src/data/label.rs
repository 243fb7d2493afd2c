use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of surgical phases.
pub const N_PHASES: usize = 7;
/// Number of physical tools.
pub const N_PHYSICAL_TOOLS: usize = 7;
/// Tool classes including the no-tool pseudo-class.
pub const N_TOOLS: usize = N_PHYSICAL_TOOLS + 1;
/// Index of the no-tool class.
pub const NO_TOOL: usize = 7;
/// Maximum number of simultaneously present physical tools.
pub const MAX_TOOLS_PER_FRAME: usize = 3;

pub const PHASE_NAMES: [&str; N_PHASES] = [
    "Preparation",
    "CalotTriangleDissection",
    "ClippingCutting",
    "GallbladderDissection",
    "GallbladderPackaging",
    "CleaningCoagulation",
    "GallbladderRetraction",
];

pub const TOOL_NAMES: [&str; N_TOOLS] =
    ["Grasper", "Bipolar", "Hook", "Scissors", "Clipper", "Irrigator", "SpecimenBag", "NoTool"];

const PHYSICAL_MASK: u8 = 0x7f;
const NO_TOOL_BIT: u8 = 1 << NO_TOOL;

pub fn phase_index(name: &str) -> Option<usize> {
    PHASE_NAMES.iter().position(|&n| n == name)
}

/// Ground truth of one frame: phase id and an 8-bit tool multi-hot
/// (bit 7 is the no-tool class).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameLabel {
    phase: u8,
    tools: u8,
}

impl FrameLabel {
    /// Builds a label from a phase and the physical-tool bits (0..7); the
    /// no-tool bit is derived.
    pub fn new(phase: usize, physical_tools: u8) -> Result<Self> {
        if phase >= N_PHASES {
            return Err(Error::InvalidArgument(format!("phase {phase} out of range 0..{N_PHASES}")));
        }
        if physical_tools & !PHYSICAL_MASK != 0 {
            return Err(Error::InvalidArgument(format!(
                "tool bits {physical_tools:#010b} set outside the physical tools"
            )));
        }
        let n = physical_tools.count_ones() as usize;
        if n > MAX_TOOLS_PER_FRAME {
            return Err(Error::InvalidArgument(format!("{n} tools present, at most {MAX_TOOLS_PER_FRAME} allowed")));
        }
        let tools = if physical_tools == 0 { NO_TOOL_BIT } else { physical_tools };
        Ok(Self { phase: phase as u8, tools })
    }

    /// Builds from a full 8-bit mask, checking no-tool consistency.
    pub fn from_mask(phase: usize, mask: u8) -> Result<Self> {
        let label = Self::new(phase, mask & PHYSICAL_MASK)?;
        if label.tools != mask {
            return Err(Error::InvalidArgument(format!("inconsistent no-tool bit in mask {mask:#010b}")));
        }
        Ok(label)
    }

    pub fn from_tool_list(phase: usize, tools: &[usize]) -> Result<Self> {
        let mut mask = 0u8;
        for &t in tools {
            if t >= N_PHYSICAL_TOOLS {
                return Err(Error::InvalidArgument(format!("tool {t} is not a physical tool")));
            }
            mask |= 1 << t;
        }
        Self::new(phase, mask)
    }

    #[inline]
    pub fn phase(&self) -> usize {
        self.phase as usize
    }

    #[inline]
    pub fn mask(&self) -> u8 {
        self.tools
    }

    #[inline]
    pub fn has_tool(&self, tool: usize) -> bool {
        self.tools & (1 << tool) != 0
    }

    pub fn tools(&self) -> impl Iterator<Item = usize> + '_ {
        (0..N_TOOLS).filter(move |&t| self.has_tool(t))
    }

    pub fn phase_one_hot(&self) -> [f64; N_PHASES] {
        let mut v = [0.0; N_PHASES];
        v[self.phase()] = 1.0;
        v
    }

    pub fn tool_multi_hot(&self) -> [f64; N_TOOLS] {
        let mut v = [0.0; N_TOOLS];
        for t in self.tools() {
            v[t] = 1.0;
        }
        v
    }

    pub fn tool_bits(&self) -> [u8; N_TOOLS] {
        let mut v = [0u8; N_TOOLS];
        for t in self.tools() {
            v[t] = 1;
        }
        v
    }

    /// True when the label satisfies the no-tool and tool-count invariants.
    pub fn is_consistent(&self) -> bool {
        Self::from_mask(self.phase(), self.tools).is_ok()
    }
}
