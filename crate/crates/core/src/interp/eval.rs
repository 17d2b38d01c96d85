//! Expression evaluation against the current frame.

use crate::ast::*;
use crate::memory::{Address, MemoryImage};
use crate::rng::RngState;

use super::Layout;

/// Evaluates the expressions of one (agent, action) pair, or the
/// initializers of a new agent when there is no performer.
pub(super) struct Evaluator<'a> {
    pub model: &'a Model,
    pub layout: &'a Layout,
    pub memory: &'a MemoryImage,
    pub rng: &'a mut RngState,
    pub delta_time: f64,
    pub performer: Option<(&'a AgentDefinition, Address)>,
    pub utilities: &'a [UtilityDefinition],
    cache: Vec<Option<f64>>,
}

pub(super) type Outcome = Result<f64, String>;

impl<'a> Evaluator<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &'a Model,
        layout: &'a Layout,
        memory: &'a MemoryImage,
        rng: &'a mut RngState,
        delta_time: f64,
        performer: Option<(&'a AgentDefinition, Address)>,
        utilities: &'a [UtilityDefinition],
    ) -> Evaluator<'a> {
        Evaluator {
            model,
            layout,
            memory,
            rng,
            delta_time,
            performer,
            utilities,
            cache: vec![None; utilities.len()],
        }
    }

    fn performer(&self) -> Result<(&'a AgentDefinition, Address), String> {
        self.performer
            .ok_or_else(|| "attribute reference outside an agent".to_string())
    }

    fn position(&self) -> Result<(f64, f64), String> {
        let (def, base) = self.performer()?;
        match def.kind {
            AgentKind::Stage { .. } => Ok((self.read(base)?, self.read(base.offset(1))?)),
            AgentKind::Patch => {
                let (col, row) = self
                    .layout
                    .cell_of(base)
                    .ok_or_else(|| format!("address {base} is not a patch"))?;
                Ok(self.layout.center(col, row))
            }
            AgentKind::World => Err("the World has no location".to_string()),
        }
    }

    fn read(&self, a: Address) -> Outcome {
        self.memory.read(a).map_err(|e| e.to_string())
    }

    /// Patch cell holding the performer.
    fn here(&self) -> Result<(usize, usize), String> {
        let (x, y) = self.position()?;
        if self.layout.patches.is_empty() {
            return Err("the model has no patches".to_string());
        }
        Ok(self.layout.cell_at(x, y))
    }

    pub fn address(&self, v: &AttributeVariable) -> Result<Address, String> {
        let (agent, base) = match v.agent {
            AgentRef::My => self.performer()?,
            AgentRef::World => {
                let def = self.model.world().ok_or("the model has no World")?;
                (def, self.layout.world.ok_or("the World is not allocated")?)
            }
            AgentRef::Here => {
                let def = self.model.patch().ok_or("the model has no Patch")?;
                let (col, row) = self.here()?;
                (def, self.layout.patch(col, row))
            }
        };
        let offset = agent.slot_offset(&v.identifier).ok_or_else(|| {
            format!("`{}` has no attribute `{}`", agent.name(), v.identifier)
        })?;
        Ok(base.offset(offset))
    }

    fn utility(&mut self, name: &str) -> Outcome {
        let i = self
            .utilities
            .iter()
            .position(|u| u.identifier == name)
            .ok_or_else(|| format!("unknown utility `{name}`"))?;
        if let Some(v) = self.cache[i] {
            return Ok(v);
        }
        let utilities = self.utilities;
        let v = self.eval(&utilities[i].expression)?;
        self.cache[i] = Some(v);
        Ok(v)
    }

    pub fn eval(&mut self, e: &Expression) -> Outcome {
        let v = self.eval_node(e)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("non-finite result {v}"))
        }
    }

    fn eval_node(&mut self, e: &Expression) -> Outcome {
        use Expression::*;
        match e {
            Literal { value, unit } => Ok(unit.unit.to_si(*value)),
            DeltaTime => Ok(self.delta_time),
            Attribute(v) => {
                let a = self.address(v)?;
                self.read(a)
            }
            Utility(name) => self.utility(name),
            Placeholder(name) => Err(format!("unbound placeholder `the {name}`")),
            Negate(inner) => Ok(-self.eval(inner)?),
            Binary { op, left, right } => {
                let l = self.eval(left)?;
                let r = self.eval(right)?;
                match op {
                    BinaryOp::Add => Ok(l + r),
                    BinaryOp::Sub => Ok(l - r),
                    BinaryOp::Mul => Ok(l * r),
                    BinaryOp::Div if r == 0.0 => Err("division by zero".to_string()),
                    BinaryOp::Div => Ok(l / r),
                    BinaryOp::Pow => Ok(l.powf(r)),
                }
            }
            Apply { function, args } => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.eval(a)?);
                }
                apply(*function, &values)
            }
            Uniform { low, high } => {
                let (l, h) = (self.eval(low)?, self.eval(high)?);
                self.rng.uniform(l, h).map_err(|e| e.to_string())
            }
            Normal { mean, sigma } => {
                let (m, s) = (self.eval(mean)?, self.eval(sigma)?);
                self.rng.normal(m, s).map_err(|e| e.to_string())
            }
            Gamma { shape, scale } => {
                let (k, t) = (self.eval(shape)?, self.eval(scale)?);
                self.rng.gamma(k, t).map_err(|e| e.to_string())
            }
            LogLogistic { scale, shape } => {
                let (a, b) = (self.eval(scale)?, self.eval(shape)?);
                self.rng.log_logistic(a, b).map_err(|e| e.to_string())
            }
            EnUnit { expr, unit } => Ok(self.eval(expr)? * unit.unit.scale()),
            DeUnit { expr, unit } => Ok(self.eval(expr)? / unit.unit.scale()),
            Direction { attribute } => self.direction(attribute),
        }
    }

    /// Heading from the performer to the center of the richest patch among
    /// its own and the eight surrounding ones; 0 when staying is best.
    fn direction(&self, attribute: &str) -> Outcome {
        let patch = self.model.patch().ok_or("the model has no Patch")?;
        let offset = patch
            .slot_offset(attribute)
            .ok_or_else(|| format!("`Patch` has no attribute `{attribute}`"))?;
        let (x, y) = self.position()?;
        let (col, row) = self.here()?;
        let mut best: Option<((usize, usize), f64)> = None;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (c, r) = (col as i64 + dx, row as i64 + dy);
                if c < 0 || r < 0 || c >= self.layout.cols as i64 || r >= self.layout.rows as i64 {
                    continue;
                }
                let cell = (c as usize, r as usize);
                let v = self.read(self.layout.patch(cell.0, cell.1).offset(offset))?;
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((cell, v));
                }
            }
        }
        let ((c, r), _) = best.expect("the performer's own patch is always in bounds");
        if (c, r) == (col, row) {
            return Ok(0.0);
        }
        let (cx, cy) = self.layout.center(c, r);
        Ok((cy - y).atan2(cx - x))
    }
}

fn apply(function: Builtin, v: &[f64]) -> Outcome {
    let x = v[0];
    let r = match function {
        Builtin::Cos => x.cos(),
        Builtin::Sin => x.sin(),
        Builtin::Tan => x.tan(),
        Builtin::Exp => x.exp(),
        Builtin::Ln | Builtin::Log if x <= 0.0 => {
            return Err(format!("{} of nonpositive value {x}", function.name()))
        }
        Builtin::Ln => x.ln(),
        Builtin::Log => x.log10(),
        Builtin::Sqrt if x < 0.0 => return Err(format!("sqrt of negative value {x}")),
        Builtin::Sqrt => x.sqrt(),
        Builtin::Abs => x.abs(),
        Builtin::Floor => x.floor(),
        Builtin::Ceiling => x.ceil(),
        Builtin::Min => x.min(v[1]),
        Builtin::Max => x.max(v[1]),
    };
    Ok(r)
}
