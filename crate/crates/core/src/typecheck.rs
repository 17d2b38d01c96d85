//! Static checking by measurement-unit dimension.
//!
//! Every expression is assigned a [`Unit`]. Two units are compatible when
//! their dimensions match; scales never matter for acceptance because all
//! values are held in SI at run time.

#![allow(clippy::result_large_err)]

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::ast::*;
use crate::units::{BaseUnit, Unit, UnitError};

#[derive(Debug, Clone, PartialEq, Error)]
pub struct TypeError {
    pub message: String,
    pub span: Span,
    pub expected: Option<Unit>,
    pub actual: Option<Unit>,
}

impl TypeError {
    fn new(message: impl Into<String>) -> TypeError {
        TypeError {
            message: message.into(),
            span: Span::default(),
            expected: None,
            actual: None,
        }
    }

    fn mismatch(message: impl Into<String>, expected: Unit, actual: Unit) -> TypeError {
        TypeError {
            expected: Some(expected),
            actual: Some(actual),
            ..TypeError::new(message)
        }
    }

    fn at(mut self, span: Span) -> TypeError {
        self.span = span;
        self
    }
}

impl From<UnitError> for TypeError {
    fn from(e: UnitError) -> TypeError {
        TypeError::new(e.to_string())
    }
}

/// `line:col: error: message (expected [u1], got [u2])`
impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: error: {}", self.span, self.message)?;
        if let (Some(e), Some(a)) = (&self.expected, &self.actual) {
            write!(f, " (expected {e}, got {a})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub message: String,
    pub span: Span,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: warning: {}", self.span, self.message)
    }
}

/// Inferred units of one task's placeholders and utilities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskTypes {
    pub placeholders: BTreeMap<Identifier, Unit>,
    pub utilities: BTreeMap<Identifier, Unit>,
}

#[derive(Debug, Clone, Default)]
pub struct ModelReport {
    pub errors: Vec<TypeError>,
    pub warnings: Vec<Warning>,
    /// One entry per task, in declaration order.
    pub tasks: Vec<TaskTypes>,
}

impl ModelReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// An error that has already been reported elsewhere (a cyclic or ill-typed
/// utility); expressions depending on it fail silently.
type Inferred = Result<Unit, Option<TypeError>>;

/// Everything an expression can refer to while being typed.
pub struct TypeEnv<'a> {
    model: &'a Model,
    performer: &'a AgentDefinition,
    utilities: HashMap<&'a str, &'a UtilityDefinition>,
    placeholders: HashMap<String, Option<Unit>>,
    cache: RefCell<HashMap<String, Result<Unit, ()>>>,
    in_progress: RefCell<HashSet<String>>,
    errors: RefCell<Vec<TypeError>>,
}

impl<'a> TypeEnv<'a> {
    pub fn new(model: &'a Model, performer: &'a AgentDefinition) -> TypeEnv<'a> {
        TypeEnv {
            model,
            performer,
            utilities: HashMap::new(),
            placeholders: HashMap::new(),
            cache: RefCell::default(),
            in_progress: RefCell::default(),
            errors: RefCell::default(),
        }
    }

    /// Brings the utilities of an action into scope.
    pub fn with_action(mut self, action: &'a ActionDefinition) -> TypeEnv<'a> {
        self.utilities = action
            .utilities
            .iter()
            .map(|u| (u.identifier.as_str(), u))
            .collect();
        self
    }

    pub fn with_placeholder(mut self, name: &str, unit: Unit) -> TypeEnv<'a> {
        self.placeholders.insert(name.to_string(), Some(unit));
        self
    }

    /// Unit of a utility in scope, inferring (and caching) it on demand.
    pub fn utility_unit(&self, name: &str) -> Option<Unit> {
        self.utility(name).ok()
    }

    fn take_errors(&self) -> Vec<TypeError> {
        std::mem::take(&mut self.errors.borrow_mut())
    }

    fn resolve_agent(&self, agent: AgentRef) -> Result<&'a AgentDefinition, TypeError> {
        match agent {
            AgentRef::My => Ok(self.performer),
            AgentRef::World => self
                .model
                .world()
                .ok_or_else(|| TypeError::new("the model defines no World")),
            AgentRef::Here => match self.performer.kind {
                AgentKind::Patch => Ok(self.performer),
                AgentKind::World => Err(TypeError::new("the World has no location, so `here` is undefined")),
                AgentKind::Stage { .. } => self
                    .model
                    .patch()
                    .ok_or_else(|| TypeError::new("the model defines no Patch")),
            },
        }
    }

    fn attribute(&self, v: &AttributeVariable) -> Result<Unit, TypeError> {
        let agent = self.resolve_agent(v.agent)?;
        agent.attribute_unit(&v.identifier).ok_or_else(|| {
            TypeError::new(format!(
                "`{}` has no attribute `{}`",
                agent.name(),
                v.identifier
            ))
        })
    }

    fn utility(&self, name: &str) -> Inferred {
        if let Some(cached) = self.cache.borrow().get(name) {
            return cached.map_err(|()| None);
        }
        let Some(def) = self.utilities.get(name).copied() else {
            return Err(Some(TypeError::new(format!("unknown utility `{name}`"))));
        };
        if !self.in_progress.borrow_mut().insert(name.to_string()) {
            // cycles are reported by `utility_cycles`
            return Err(None);
        }
        let result = self.infer(&def.expression);
        self.in_progress.borrow_mut().remove(name);
        let stored = match result {
            Ok(u) => Ok(u),
            Err(err) => {
                if let Some(err) = err {
                    self.errors.borrow_mut().push(err.at(def.span));
                }
                Err(())
            }
        };
        self.cache.borrow_mut().insert(name.to_string(), stored);
        stored.map_err(|()| None)
    }

    fn same_dimension(&self, what: &str, a: &Expression, b: &Expression) -> Inferred {
        let ua = self.infer(a)?;
        let ub = self.infer(b)?;
        if ua.same_dimension(&ub) {
            Ok(ua)
        } else {
            Err(Some(TypeError::mismatch(
                format!("{what} need operands of the same dimension"),
                ua,
                ub,
            )))
        }
    }

    fn expect_dimension(&self, what: &str, e: &Expression, expected: Unit) -> Inferred {
        let actual = self.infer(e)?;
        if actual.same_dimension(&expected) {
            Ok(actual)
        } else {
            Err(Some(TypeError::mismatch(what.to_string(), expected, actual)))
        }
    }

    fn infer(&self, e: &Expression) -> Inferred {
        use Expression::*;
        let dimensionless = Unit::DIMENSIONLESS;
        match e {
            Literal { unit, .. } => Ok(unit.unit),
            DeltaTime => Ok(Unit::base(BaseUnit::S)),
            Attribute(v) => self.attribute(v).map_err(Some),
            Utility(name) => self.utility(name),
            Placeholder(name) => match self.placeholders.get(name) {
                Some(Some(u)) => Ok(*u),
                Some(None) => Err(None),
                None => Err(Some(TypeError::new(format!(
                    "placeholder `the {name}` is not bound here"
                )))),
            },
            Negate(inner) => self.infer(inner),
            Binary { op, left, right } => match op {
                BinaryOp::Add | BinaryOp::Sub => {
                    self.same_dimension(&format!("`{}`", op.symbol()), left, right)
                }
                BinaryOp::Mul => Ok(self.infer(left)?.mul(&self.infer(right)?).map_err(|e| Some(e.into()))?),
                BinaryOp::Div => Ok(self.infer(left)?.div(&self.infer(right)?).map_err(|e| Some(e.into()))?),
                BinaryOp::Pow => self.power(left, right),
            },
            Apply { function, args } => self.apply(*function, args),
            Uniform { low, high } => self.same_dimension("`uniform` bounds", low, high),
            Normal { mean, sigma } => self.same_dimension("`normal` mean and sigma", mean, sigma),
            Gamma { shape, scale } => {
                self.expect_dimension("`gamma` shape must be dimensionless", shape, dimensionless)?;
                self.infer(scale)
            }
            LogLogistic { scale, shape } => {
                self.expect_dimension("`loglogistic` shape must be dimensionless", shape, dimensionless)?;
                self.infer(scale)
            }
            EnUnit { expr, unit } => {
                self.expect_dimension("`as` applies to dimensionless values", expr, dimensionless)?;
                Ok(unit.unit)
            }
            DeUnit { expr, unit } => {
                self.expect_dimension("`in` must match the dimension of its operand", expr, unit.unit)?;
                Ok(dimensionless)
            }
            Direction { attribute } => {
                if self.performer.kind == AgentKind::World {
                    return Err(Some(TypeError::new(
                        "the World has no location, so `direction` is undefined",
                    )));
                }
                let patch = self
                    .model
                    .patch()
                    .ok_or_else(|| TypeError::new("`direction` needs a Patch definition"))?;
                if patch.declaration(attribute).is_none() {
                    return Err(Some(TypeError::new(format!(
                        "`Patch` has no attribute `{attribute}`"
                    ))));
                }
                Ok(Unit::base(BaseUnit::Rad))
            }
        }
    }

    fn power(&self, base: &Expression, exponent: &Expression) -> Inferred {
        let base_unit = self.infer(base)?;
        self.expect_dimension("exponents must be dimensionless", exponent, Unit::DIMENSIONLESS)?;
        if base_unit.is_dimensionless() {
            return Ok(Unit::DIMENSIONLESS);
        }
        let n = integer_literal(exponent).ok_or_else(|| {
            TypeError::new(format!(
                "a base with dimension {base_unit} needs an integer literal exponent"
            ))
        })?;
        Ok(base_unit.pow(n).map_err(TypeError::from)?)
    }

    fn apply(&self, function: Builtin, args: &[Expression]) -> Inferred {
        if args.len() != function.arity() {
            return Err(Some(TypeError::new(format!(
                "`{}` takes {} argument(s), got {}",
                function.name(),
                function.arity(),
                args.len()
            ))));
        }
        let name = function.name();
        match function {
            Builtin::Cos | Builtin::Sin | Builtin::Tan => {
                self.expect_dimension(&format!("`{name}` takes an angle"), &args[0], Unit::base(BaseUnit::Rad))?;
                Ok(Unit::DIMENSIONLESS)
            }
            Builtin::Exp | Builtin::Ln | Builtin::Log => {
                self.expect_dimension(
                    &format!("`{name}` takes a dimensionless value"),
                    &args[0],
                    Unit::DIMENSIONLESS,
                )?;
                Ok(Unit::DIMENSIONLESS)
            }
            Builtin::Sqrt => {
                let u = self.infer(&args[0])?;
                let dim = u.dimension().sqrt().ok_or_else(|| {
                    TypeError::new(format!("`sqrt` of {u} has no integral dimension"))
                })?;
                Ok(Unit::new(dim, u.scale().sqrt()).map_err(TypeError::from)?)
            }
            Builtin::Abs | Builtin::Floor | Builtin::Ceiling => self.infer(&args[0]),
            Builtin::Min | Builtin::Max => {
                self.same_dimension(&format!("`{name}` arguments"), &args[0], &args[1])
            }
        }
    }
}

fn integer_literal(e: &Expression) -> Option<i32> {
    match e {
        Expression::Literal { value, unit }
            if unit.unit.is_dimensionless() && value.fract() == 0.0 && value.abs() <= 64.0 =>
        {
            Some(*value as i32)
        }
        Expression::Negate(inner) => integer_literal(inner).map(|n| -n),
        _ => None,
    }
}

/// Infers the unit of a fully bound expression.
pub fn infer_type(e: &Expression, env: &TypeEnv<'_>) -> Result<Unit, TypeError> {
    env.infer(e).map_err(|err| match err {
        Some(err) => err,
        None => env
            .take_errors()
            .into_iter()
            .next()
            .unwrap_or_else(|| TypeError::new("expression depends on a cyclic utility")),
    })
}

/// Groups of utilities that depend on each other, each as the path around
/// the cycle in definition order.
pub fn utility_cycles(action: &ActionDefinition) -> Vec<Vec<Identifier>> {
    let index: HashMap<&str, usize> = action
        .utilities
        .iter()
        .enumerate()
        .map(|(i, u)| (u.identifier.as_str(), i))
        .collect();
    let edges: Vec<Vec<usize>> = action
        .utilities
        .iter()
        .map(|u| {
            u.expression
                .utility_refs()
                .iter()
                .filter_map(|r| index.get(r.as_str()).copied())
                .collect()
        })
        .collect();

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    fn visit(
        node: usize,
        edges: &[Vec<usize>],
        marks: &mut [Mark],
        stack: &mut Vec<usize>,
        cycles: &mut Vec<Vec<usize>>,
    ) {
        marks[node] = Mark::Active;
        stack.push(node);
        for &next in &edges[node] {
            match marks[next] {
                Mark::New => visit(next, edges, marks, stack, cycles),
                Mark::Active => {
                    let start = stack.iter().position(|&n| n == next).unwrap();
                    cycles.push(stack[start..].to_vec());
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        marks[node] = Mark::Done;
    }

    let mut marks = vec![Mark::New; edges.len()];
    let mut cycles = Vec::new();
    for node in 0..edges.len() {
        if marks[node] == Mark::New {
            visit(node, &edges, &mut marks, &mut Vec::new(), &mut cycles);
        }
    }
    cycles
        .into_iter()
        .map(|c| {
            c.into_iter()
                .map(|i| action.utilities[i].identifier.clone())
                .collect()
        })
        .collect()
}

/// Checks one action as performed by `performer`. Placeholders must already
/// be in `env` (or substituted away).
pub fn check_action(
    action: &ActionDefinition,
    performer: &AgentDefinition,
    env: &TypeEnv<'_>,
) -> Vec<TypeError> {
    let mut errors = Vec::new();
    let cyclic: HashSet<Identifier> = utility_cycles(action)
        .into_iter()
        .flat_map(|cycle| {
            let first = action.utility(&cycle[0]).unwrap();
            let mut path = cycle.clone();
            path.push(cycle[0].clone());
            errors.push(
                TypeError::new(format!(
                    "utility definitions form a cycle: {}",
                    path.join(" -> ")
                ))
                .at(first.span),
            );
            cycle
        })
        .collect();

    // Utilities inside a cycle are never inferred; mark them as reported.
    for name in &cyclic {
        env.cache.borrow_mut().insert(name.clone(), Err(()));
    }
    for u in &action.utilities {
        let _ = env.utility(&u.identifier);
    }

    for d in &action.definitions {
        let target = match env.attribute(&d.variable) {
            Ok(u) => u,
            Err(e) => {
                errors.push(e.at(d.span));
                continue;
            }
        };
        let value = match env.infer(&d.expression) {
            Ok(u) => u,
            Err(e) => {
                errors.extend(e.map(|e| e.at(d.span)));
                continue;
            }
        };
        let written = match d.decorator {
            Decorator::Assign | Decorator::Delta => value,
            Decorator::Differential => match value.mul(&Unit::base(BaseUnit::S)) {
                Ok(u) => u,
                Err(e) => {
                    errors.push(TypeError::from(e).at(d.span));
                    continue;
                }
            },
        };
        if !written.same_dimension(&target) {
            let what = match d.decorator {
                Decorator::Differential => "rate times time step",
                _ => "value",
            };
            errors.push(
                TypeError::mismatch(
                    format!(
                        "{what} does not match the dimension of `{}`",
                        d.variable.identifier
                    ),
                    target,
                    written,
                )
                .at(d.span),
            );
        }
    }

    for l in &action.lifecycle {
        let span = l.span();
        if !performer.is_stage() {
            errors.push(
                TypeError::new(format!(
                    "`{}` cannot change stage, spawn or die",
                    performer.name()
                ))
                .at(span),
            );
            continue;
        }
        match l {
            LifecycleDirective::Become { target, .. } | LifecycleDirective::Spawn { stage: target, .. }
                if env.model.stage(target).is_none() =>
            {
                errors.push(TypeError::new(format!("unknown stage `{target}`")).at(span));
            }
            _ => {}
        }
        if let LifecycleDirective::Spawn { count, .. } = l {
            if let Err(e) = env.expect_dimension("spawn count must be dimensionless", count, Unit::DIMENSIONLESS) {
                errors.extend(e.map(|e| e.at(span)));
            }
        }
        if let Some(g) = l.guard() {
            let what = format!("`{}`", g.op.symbol());
            if let Err(e) = env.same_dimension(&what, &g.left, &g.right) {
                errors.extend(e.map(|e| e.at(span)));
            }
        }
    }

    errors.extend(env.take_errors());
    errors
}

/// Checks a whole model: initializers, task bindings and every action in
/// the scope of each performer that runs it.
pub fn check_model(model: &Model) -> ModelReport {
    let mut report = ModelReport::default();

    for agent in &model.agents {
        let env = TypeEnv::new(model, agent);
        for decl in &agent.attributes {
            let Some(init) = &decl.initial else { continue };
            match env.infer(init) {
                Ok(u) if !u.same_dimension(&decl.unit.unit) => report.errors.push(
                    TypeError::mismatch(
                        format!("initial value of `{}` has the wrong dimension", decl.identifier),
                        decl.unit.unit,
                        u,
                    )
                    .at(decl.span),
                ),
                Ok(_) => {}
                Err(e) => report.errors.extend(e.map(|e| e.at(decl.span))),
            }
        }
    }

    let mut used = HashSet::new();
    for task in &model.tasks {
        let mut types = TaskTypes::default();
        check_task(model, task, &mut types, &mut report.errors);
        used.insert(task.action.as_str());
        report.tasks.push(types);
    }

    for action in &model.actions {
        if !used.contains(action.name.as_str()) {
            report.warnings.push(Warning {
                message: format!("action `{}` is not used by any task", action.name),
                span: action.span,
            });
        }
        let mut assigned = HashSet::new();
        for d in &action.definitions {
            if d.decorator == Decorator::Assign && !assigned.insert(&d.variable) {
                report.warnings.push(Warning {
                    message: format!(
                        "`{}` is assigned more than once; the last assignment wins",
                        d.variable.identifier
                    ),
                    span: d.span,
                });
            }
        }
    }

    let mut seen = HashSet::new();
    report
        .errors
        .retain(|e| seen.insert((e.span.line, e.span.column, e.message.clone())));
    report.errors.sort_by_key(|e| (e.span.line, e.span.column));
    report
}

fn check_task(model: &Model, task: &TaskDefinition, types: &mut TaskTypes, errors: &mut Vec<TypeError>) {
    let Some(performer) = model.agent(&task.agent) else {
        errors.push(TypeError::new(format!("unknown agent `{}`", task.agent)).at(task.span));
        return;
    };
    let Some(action) = model.action(&task.action) else {
        errors.push(TypeError::new(format!("unknown action `{}`", task.action)).at(task.span));
        return;
    };

    let required = action.placeholders();
    for name in &required {
        if task.binding(name).is_none() {
            errors.push(
                TypeError::new(format!(
                    "placeholder `the {name}` of action `{}` is not bound",
                    action.name
                ))
                .at(task.span),
            );
        }
    }

    let binding_env = TypeEnv::new(model, performer).with_action(action);
    let mut env = TypeEnv::new(model, performer).with_action(action);
    for b in &task.bindings {
        if !required.contains(&b.placeholder) {
            errors.push(
                TypeError::new(format!(
                    "action `{}` has no placeholder `the {}`",
                    action.name, b.placeholder
                ))
                .at(b.span),
            );
            continue;
        }
        let unit = match binding_env.infer(&b.expression) {
            Ok(u) => Some(u),
            Err(e) => {
                errors.extend(e.map(|e| e.at(b.span)));
                None
            }
        };
        if let Some(u) = unit {
            types.placeholders.insert(b.placeholder.clone(), u);
        }
        env.placeholders.insert(b.placeholder.clone(), unit);
    }
    errors.extend(binding_env.take_errors());
    // Unbound placeholders were reported above.
    for name in &required {
        env.placeholders.entry(name.clone()).or_insert(None);
    }

    errors.extend(check_action(action, performer, &env));
    for u in &action.utilities {
        if let Some(unit) = env.utility_unit(&u.identifier) {
            types.utilities.insert(u.identifier.clone(), unit);
        }
    }
}
