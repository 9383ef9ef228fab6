//! Mechanical sketch extraction and hole substitution.
//!
//! A sketch is the proof with every terminal justification replaced by an
//! indexed `sorry` hole. Apply-style proofs collapse to a single hole: apply
//! commands are not independently checkable subgoals, so per-command holes
//! would break proof-state alignment. Isar structure (opening methods, cases,
//! fixes, assumptions, chains) survives verbatim.

use serde::Serialize;
use thiserror::Error;

use crate::syntax::{
    parse_justification, render_justification, render_statement, ApplyChain, ApplyTerminator,
    IsarBlock, IsarStatement, Justification, ParseError, ProofBody, ProofScript, StatementKind,
    TheoremDecl,
};

#[derive(Debug, Clone, Copy, Default)]
pub struct SketchConfig {
    /// Collapse nested `proof ... qed` justifications into a single hole
    /// instead of recursing into them.
    pub collapse_nested: bool,
}

/// Where a hole lives in the skeleton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HoleSite {
    /// The entire apply chain collapsed into one hole.
    WholeChain,
    /// The justification of the statement reached by this path. Each step
    /// selects `(section, statement)`; intermediate steps descend into that
    /// statement's nested proof.
    Statement(Vec<PathStep>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    pub section: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hole {
    /// Dense 0-based index in source order.
    pub id: usize,
    pub site: HoleSite,
    /// The justification the hole replaced, kept for round-tripping.
    pub original: Justification,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofSketch {
    /// The proof with every terminal justification turned into `sorry`.
    pub skeleton: ProofScript,
    pub holes: Vec<Hole>,
}

/// One hole's goal plus the local context an external solver needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Subgoal {
    pub hole_id: usize,
    /// Nearest enclosing case, e.g. `Cons a xs`.
    pub case_name: Option<String>,
    /// The shown proposition (`?case`, a `have` proposition, or the theorem
    /// statement itself for a collapsed apply chain).
    pub goal_prop: String,
    /// Preceding fix/assume/obtain/chain statements in the same section, in
    /// source order, rendered.
    pub context_lines: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SketchError {
    #[error("no hole with id {0}")]
    MissingHole(usize),
    #[error("tactic for hole {hole} does not parse: {source}")]
    UnparsableTactic {
        hole: usize,
        #[source]
        source: ParseError,
    },
}

/// Replace every terminal justification of `p` with an indexed `sorry` hole.
pub fn build_sketch(p: &ProofScript) -> ProofSketch {
    build_sketch_with(p, SketchConfig::default())
}

pub fn build_sketch_with(p: &ProofScript, cfg: SketchConfig) -> ProofSketch {
    let mut holes = Vec::new();
    let body = match &p.body {
        ProofBody::Apply(chain) => {
            let original = chain_justification(chain);
            holes.push(Hole { id: 0, site: HoleSite::WholeChain, original });
            ProofBody::Apply(ApplyChain {
                commands: Vec::new(),
                terminator: ApplyTerminator::Sorry,
            })
        }
        ProofBody::Isar(block) => {
            let mut sketched = block.clone();
            sketch_block(&mut sketched, &mut Vec::new(), &mut holes, cfg);
            ProofBody::Isar(sketched)
        }
    };
    ProofSketch { skeleton: ProofScript { body }, holes }
}

/// The justification equivalent of an apply chain, used as a hole original.
fn chain_justification(chain: &ApplyChain) -> Justification {
    if chain.commands.is_empty() {
        match &chain.terminator {
            ApplyTerminator::ByTactic(m) => Justification::ByTactic(m.clone()),
            ApplyTerminator::Sorry => Justification::Sorry,
            ApplyTerminator::Oops => Justification::Oops,
            ApplyTerminator::Done => Justification::Done,
        }
    } else {
        Justification::ApplySeq {
            commands: chain.commands.clone(),
            terminator: chain.terminator.clone(),
        }
    }
}

fn sketch_block(
    block: &mut IsarBlock,
    path: &mut Vec<PathStep>,
    holes: &mut Vec<Hole>,
    cfg: SketchConfig,
) {
    for (si, section) in block.sections.iter_mut().enumerate() {
        for (i, stmt) in section.iter_mut().enumerate() {
            let Some(slot) = stmt.justification_mut() else { continue };
            path.push(PathStep { section: si, index: i });
            match slot {
                Justification::NestedProof(inner) if !cfg.collapse_nested => {
                    sketch_block(inner, path, holes, cfg);
                }
                _ => {
                    let original = std::mem::replace(slot, Justification::Sorry);
                    holes.push(Hole {
                        id: holes.len(),
                        site: HoleSite::Statement(path.clone()),
                        original,
                    });
                }
            }
            path.pop();
        }
    }
}

/// One subgoal per hole, in hole order. For a collapsed apply chain the goal
/// is the theorem statement itself when a declaration is supplied, `?thesis`
/// otherwise.
pub fn parse_subgoals(sketch: &ProofSketch, theorem: Option<&TheoremDecl>) -> Vec<Subgoal> {
    sketch
        .holes
        .iter()
        .map(|hole| match &hole.site {
            HoleSite::WholeChain => Subgoal {
                hole_id: hole.id,
                case_name: None,
                goal_prop: theorem
                    .map(|t| t.statement.clone())
                    .unwrap_or_else(|| "?thesis".to_string()),
                context_lines: Vec::new(),
            },
            HoleSite::Statement(path) => {
                let ProofBody::Isar(block) = &sketch.skeleton.body else {
                    unreachable!("statement sites only occur in Isar skeletons");
                };
                subgoal_at(block, path, hole.id)
            }
        })
        .collect()
}

fn subgoal_at(block: &IsarBlock, path: &[PathStep], hole_id: usize) -> Subgoal {
    let step = path[0];
    let section = &block.sections[step.section];
    let stmt = &section[step.index];
    if path.len() > 1 {
        let Some(Justification::NestedProof(inner)) = stmt.justification() else {
            unreachable!("path descends through nested proofs");
        };
        let mut sub = subgoal_at(inner, &path[1..], hole_id);
        // Case context falls back to the enclosing scope when the inner
        // section has none before the descent point.
        if sub.case_name.is_none() {
            sub.case_name = case_before(section, step.index);
        }
        return sub;
    }
    Subgoal {
        hole_id,
        case_name: case_before(section, step.index),
        goal_prop: goal_of(stmt),
        context_lines: context_before(section, step.index),
    }
}

fn case_before(section: &[IsarStatement], index: usize) -> Option<String> {
    section[..index].iter().rev().find_map(|s| match &s.kind {
        StatementKind::Case { name, binders } => {
            if binders.is_empty() {
                Some(name.clone())
            } else {
                Some(format!("{name} {}", binders.join(" ")))
            }
        }
        _ => None,
    })
}

fn goal_of(stmt: &IsarStatement) -> String {
    match &stmt.kind {
        StatementKind::Show { prop, .. }
        | StatementKind::Have { prop, .. }
        | StatementKind::Obtain { prop, .. } => prop.clone(),
        StatementKind::Chain { prop, .. } => prop.clone().unwrap_or_else(|| "?thesis".to_string()),
        _ => "?thesis".to_string(),
    }
}

fn context_before(section: &[IsarStatement], index: usize) -> Vec<String> {
    section[..index]
        .iter()
        .filter(|s| {
            matches!(
                s.kind,
                StatementKind::Fix { .. }
                    | StatementKind::Assume { .. }
                    | StatementKind::Obtain { .. }
                    | StatementKind::Chain { .. }
            )
        })
        .map(render_statement)
        .collect()
}

/// Tactic texts keyed by hole id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HoleAssignment(pub std::collections::BTreeMap<usize, String>);

impl HoleAssignment {
    pub fn single(hole: usize, tactic: &str) -> Self {
        let mut m = std::collections::BTreeMap::new();
        m.insert(hole, tactic.to_string());
        HoleAssignment(m)
    }

    pub fn insert(&mut self, hole: usize, tactic: &str) {
        self.0.insert(hole, tactic.to_string());
    }
}

/// Fill every hole of `sketch` with its assigned tactic.
pub fn substitute(
    sketch: &ProofSketch,
    assignment: &HoleAssignment,
) -> Result<ProofScript, SketchError> {
    for id in assignment.0.keys() {
        if *id >= sketch.holes.len() {
            return Err(SketchError::MissingHole(*id));
        }
    }
    let mut script = sketch.skeleton.clone();
    for hole in &sketch.holes {
        let tactic = assignment.0.get(&hole.id).ok_or(SketchError::MissingHole(hole.id))?;
        fill(&mut script, hole, tactic)?;
    }
    Ok(script)
}

/// Fill hole `hole_id` with `tactic`, leaving every other hole as `sorry`.
pub fn partial_fill(
    sketch: &ProofSketch,
    hole_id: usize,
    tactic: &str,
) -> Result<ProofScript, SketchError> {
    let hole = sketch.holes.get(hole_id).ok_or(SketchError::MissingHole(hole_id))?;
    let mut script = sketch.skeleton.clone();
    fill(&mut script, hole, tactic)?;
    Ok(script)
}

fn fill(script: &mut ProofScript, hole: &Hole, tactic: &str) -> Result<(), SketchError> {
    let justification = parse_justification(tactic)
        .map_err(|source| SketchError::UnparsableTactic { hole: hole.id, source })?;
    match &hole.site {
        HoleSite::WholeChain => {
            script.body = match justification {
                Justification::NestedProof(block) => ProofBody::Isar(*block),
                Justification::ApplySeq { commands, terminator } => {
                    ProofBody::Apply(ApplyChain { commands, terminator })
                }
                Justification::ByTactic(m) => ProofBody::Apply(ApplyChain {
                    commands: Vec::new(),
                    terminator: ApplyTerminator::ByTactic(m),
                }),
                Justification::Sorry => ProofBody::Apply(ApplyChain {
                    commands: Vec::new(),
                    terminator: ApplyTerminator::Sorry,
                }),
                Justification::Oops => ProofBody::Apply(ApplyChain {
                    commands: Vec::new(),
                    terminator: ApplyTerminator::Oops,
                }),
                Justification::Done => ProofBody::Apply(ApplyChain {
                    commands: Vec::new(),
                    terminator: ApplyTerminator::Done,
                }),
            };
        }
        HoleSite::Statement(path) => {
            let ProofBody::Isar(block) = &mut script.body else {
                unreachable!("statement sites only occur in Isar skeletons");
            };
            *slot_at(block, path) = justification;
        }
    }
    Ok(())
}

fn slot_at<'a>(block: &'a mut IsarBlock, path: &[PathStep]) -> &'a mut Justification {
    let step = path[0];
    let stmt = &mut block.sections[step.section][step.index];
    let slot = stmt.justification_mut().expect("path points at a justification");
    if path.len() == 1 {
        slot
    } else {
        let Justification::NestedProof(inner) = slot else {
            unreachable!("path descends through nested proofs");
        };
        slot_at(inner, &path[1..])
    }
}

/// The assignment that maps every hole back to its original justification.
pub fn original_assignment(sketch: &ProofSketch) -> HoleAssignment {
    let mut a = HoleAssignment::default();
    for hole in &sketch.holes {
        a.0.insert(hole.id, render_justification(&hole.original));
    }
    a
}
