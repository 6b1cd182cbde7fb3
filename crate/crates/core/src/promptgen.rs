//! Renders probe items into natural-language rewriting instructions under
//! each prompting strategy.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goalspace::{
    DIM_FORMALITY, DIM_READING_DIFFICULTY, DIM_TEXTUAL_DIVERSITY, DIM_TEXT_LENGTH,
};

const UNDERSPECIFIED_PHRASES: &str = include_str!("../resources/underspecified_phrases.txt");
const DEFAULT_INSTRUCTIONS: &str = include_str!("../resources/instructions.txt");

/// Clause injected by negative prompting, placed directly after the rewrite
/// request and immediately before the source text block.
pub const NEGATIVE_CLAUSE: &str = "You MUST not change anything else about the other parts of the \
                                   text, even if it makes the rewritten text sound unnatural or \
                                   otherwise awkward.";

const RESPOND_ONLY: &str = "Respond with only the rewritten text and do not explain your response.";

const COT_SCAFFOLD: &str = "Before outputting the rewritten text, propose and discuss a few \
                            concrete edits you might apply to this specific text using the \
                            following format and replacing the placeholders in []:\n\n## Edits\n\n\
                            [your proposed edits]\n\n## Rewritten text\n\n[your rewritten text]";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("delta {0} outside the modifier range [0.1, 0.7]")]
    OutOfRange(f64),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("unknown dimension {0}: no direction phrases registered")]
    UnknownDimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Direct,
    Underspecified,
    InstructionOnly,
    DirectPlusInstruction,
    ChainOfThought,
}

impl StrategyKind {
    /// Whether prompts of this kind name the goal dimensions to change.
    pub fn names_dimensions(self) -> bool {
        !matches!(self, StrategyKind::Underspecified | StrategyKind::InstructionOnly)
    }

    fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Direct => "direct",
            StrategyKind::Underspecified => "underspecified",
            StrategyKind::InstructionOnly => "instruction_only",
            StrategyKind::DirectPlusInstruction => "direct_plus_instruction",
            StrategyKind::ChainOfThought => "chain_of_thought",
        }
    }
}

/// A prompting strategy: the template kind plus the negative-prompt flag.
/// Negative prompting is only well-defined for kinds that name dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptStrategy {
    pub kind: StrategyKind,
    pub negative: bool,
}

impl PromptStrategy {
    pub fn new(kind: StrategyKind, negative: bool) -> Result<PromptStrategy, PromptError> {
        if negative && !kind.names_dimensions() {
            return Err(PromptError::InvalidStrategy(format!(
                "negative prompting is undefined for {}",
                kind.as_str()
            )));
        }
        Ok(PromptStrategy { kind, negative })
    }

    pub fn id(&self) -> String {
        if self.negative {
            format!("{}+negative", self.kind.as_str())
        } else {
            self.kind.as_str().to_string()
        }
    }
}

impl std::fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.id())
    }
}

impl std::str::FromStr for PromptStrategy {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind_str, negative) = match s.strip_suffix("+negative") {
            Some(k) => (k, true),
            None => (s, false),
        };
        let kind = match kind_str {
            "direct" => StrategyKind::Direct,
            "underspecified" => StrategyKind::Underspecified,
            "instruction_only" => StrategyKind::InstructionOnly,
            "direct_plus_instruction" => StrategyKind::DirectPlusInstruction,
            "chain_of_thought" | "cot" => StrategyKind::ChainOfThought,
            other => return Err(PromptError::InvalidStrategy(other.to_string())),
        };
        PromptStrategy::new(kind, negative)
    }
}

/// Intensity modifier attached to a direction phrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modifier {
    Slightly,
    None,
    Much,
}

/// Modifier for a requested delta: "slightly" under 0.2 in magnitude,
/// "much" above 0.5, none otherwise.
pub fn modifier_for(delta: f64) -> Result<Modifier, PromptError> {
    let mag = delta.abs();
    if !(0.1 - 1e-12..=0.7 + 1e-12).contains(&mag) {
        return Err(PromptError::OutOfRange(delta));
    }
    Ok(if mag < 0.2 {
        Modifier::Slightly
    } else if mag > 0.5 {
        Modifier::Much
    } else {
        Modifier::None
    })
}

impl Modifier {
    fn prefix(self) -> &'static str {
        match self {
            Modifier::Slightly => "slightly ",
            Modifier::None => "",
            Modifier::Much => "much ",
        }
    }
}

/// Direction-phrase templates per dimension. `{mod}` marks where the
/// intensity modifier is inserted.
#[derive(Debug, Clone)]
pub struct PhraseBook {
    entries: Vec<(String, String, String)>, // (dimension id, increase, decrease)
}

impl Default for PhraseBook {
    fn default() -> Self {
        PhraseBook {
            entries: vec![
                (DIM_READING_DIFFICULTY.into(), "{mod}harder to read".into(), "{mod}easier to read".into()),
                (DIM_FORMALITY.into(), "{mod}more formal".into(), "{mod}less formal".into()),
                (
                    DIM_TEXTUAL_DIVERSITY.into(),
                    "use {mod}more diverse language".into(),
                    "use {mod}less diverse language".into(),
                ),
                (DIM_TEXT_LENGTH.into(), "{mod}longer".into(), "{mod}shorter".into()),
            ],
        }
    }
}

impl PhraseBook {
    pub fn with_entry(mut self, dimension: &str, increase: &str, decrease: &str) -> Self {
        self.entries.retain(|(d, _, _)| d != dimension);
        self.entries.push((dimension.into(), increase.into(), decrease.into()));
        self
    }

    fn phrase(&self, dimension: &str, delta: f64) -> Result<String, PromptError> {
        let modifier = modifier_for(delta)?;
        let (_, inc, dec) = self
            .entries
            .iter()
            .find(|(d, _, _)| d == dimension)
            .ok_or_else(|| PromptError::UnknownDimension(dimension.to_string()))?;
        let template = if delta > 0.0 { inc } else { dec };
        Ok(template.replace("{mod}", modifier.prefix()))
    }
}

/// The bundled vague phrases for underspecified prompts.
pub fn underspecified_phrases() -> Vec<String> {
    resource_lines(UNDERSPECIFIED_PHRASES)
}

/// The bundled default instruction list.
pub fn default_instructions() -> Vec<String> {
    resource_lines(DEFAULT_INSTRUCTIONS)
}

fn resource_lines(content: &str) -> Vec<String> {
    content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

/// Prompt for extracting a numbered instruction list from free-form
/// proposed edits (the optional step that turns chain-of-thought output
/// into instruction lists for the instruction-based strategies).
pub fn render_instruction_extraction_prompt(edits: &str) -> String {
    format!(
        "A writer was asked to rewrite texts in a variety of ways. Before answering, they were \
         asked to list some changes that they intended to make to the text. Given their \
         responses, could you help me extract the proposed edits as a numbered list? Respond \
         with only the numbered list and do not explain your response.\n\n\
         **Proposed edits:**\n{edits}"
    )
}

/// Parses a numbered (or bulleted) list response into instruction strings.
pub fn parse_instruction_list(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        let stripped = line
            .strip_prefix(|c: char| c.is_ascii_digit())
            .map(|rest| rest.trim_start_matches(|c: char| c.is_ascii_digit()))
            .map(|rest| rest.trim_start_matches(['.', ')', ':']).trim_start())
            .or_else(|| line.strip_prefix(['-', '*']).map(str::trim_start));
        if let Some(instruction) = stripped {
            if !instruction.is_empty() {
                out.push(instruction.to_string());
            }
        }
    }
    out
}

/// What the renderer needs to know about a probe item.
#[derive(Debug, Clone, Copy)]
pub struct RenderInputs<'a> {
    pub dimension_ids: &'a [String],
    pub active: &'a [bool],
    pub deltas: &'a [f64],
}

/// A rendered instruction: the text placed immediately before the source
/// text, and the order in which active dimensions were verbalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    /// Active dimension indices in the order their phrases were rendered.
    pub slot_order: Vec<usize>,
    pub strategy: PromptStrategy,
}

fn join_phrases(phrases: &[String]) -> String {
    match phrases.len() {
        0 => String::new(),
        1 => phrases[0].clone(),
        2 => format!("{} and {}", phrases[0], phrases[1]),
        _ => {
            let head = phrases[..phrases.len() - 1].join(", ");
            format!("{head}, and {}", phrases[phrases.len() - 1])
        }
    }
}

fn instruction_block(instructions: &[String]) -> String {
    let bullets: Vec<String> = instructions.iter().map(|i| format!("    - {i}")).collect();
    format!(" Some ways that you can do so might include:\n\n{}", bullets.join("\n    \n"))
}

/// Renders an instruction with the bundled phrase lists.
pub fn render_prompt<R: Rng>(
    inputs: RenderInputs<'_>,
    strategy: PromptStrategy,
    rng: &mut R,
) -> Result<RenderedPrompt, PromptError> {
    render_prompt_with(inputs, strategy, &PhraseBook::default(), &default_instructions(), rng)
}

/// Renders an instruction with caller-supplied phrase and instruction lists.
///
/// The active-dimension slots are shuffled uniformly; the negative clause is
/// injected after the rewrite request, directly before the source text; the
/// chain-of-thought kind appends the `## Edits` / `## Rewritten text`
/// scaffold.
pub fn render_prompt_with<R: Rng>(
    inputs: RenderInputs<'_>,
    strategy: PromptStrategy,
    phrases: &PhraseBook,
    instructions: &[String],
    rng: &mut R,
) -> Result<RenderedPrompt, PromptError> {
    PromptStrategy::new(strategy.kind, strategy.negative)?;
    let mut slot_order: Vec<usize> =
        (0..inputs.active.len()).filter(|&i| inputs.active[i]).collect();

    let text = match strategy.kind {
        StrategyKind::Underspecified => {
            let list = underspecified_phrases();
            let vague = list.choose(rng).expect("bundled phrase list is non-empty").clone();
            slot_order.clear();
            format!("Please rewrite the following, but make it {vague}. {RESPOND_ONLY}")
        }
        StrategyKind::InstructionOnly => {
            slot_order.clear();
            format!("Please rewrite the following. {RESPOND_ONLY}{}", instruction_block(instructions))
        }
        StrategyKind::Direct | StrategyKind::DirectPlusInstruction | StrategyKind::ChainOfThought => {
            if slot_order.is_empty() {
                return Err(PromptError::InvalidStrategy(
                    "dimension-naming strategies need at least one active dimension".into(),
                ));
            }
            slot_order.shuffle(rng);
            let rendered: Vec<String> = slot_order
                .iter()
                .map(|&i| phrases.phrase(&inputs.dimension_ids[i], inputs.deltas[i]))
                .collect::<Result<_, _>>()?;
            let mut text =
                format!("Please rewrite the following, but make it {}.", join_phrases(&rendered));
            if strategy.negative {
                text.push(' ');
                text.push_str(NEGATIVE_CLAUSE);
            }
            text.push(' ');
            text.push_str(RESPOND_ONLY);
            match strategy.kind {
                StrategyKind::DirectPlusInstruction => text.push_str(&instruction_block(instructions)),
                StrategyKind::ChainOfThought => {
                    text.push(' ');
                    text.push_str(COT_SCAFFOLD);
                }
                _ => {}
            }
            text
        }
    };

    Ok(RenderedPrompt { text, slot_order, strategy })
}
