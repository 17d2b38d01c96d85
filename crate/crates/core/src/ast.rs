//! Abstract syntax of a model: agents, actions and tasks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use crate::units::{BaseUnit, Unit, UnitError};

pub type Identifier = String;

/// Source position (1-based).
///
/// Spans never take part in structural equality: two trees that differ only
/// in where they were parsed from compare equal.
#[derive(Clone, Copy, Debug, Default, Eq)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl Span {
    pub fn new(line: u32, column: u32) -> Span {
        Span { line, column }
    }
}

impl PartialEq for Span {
    fn eq(&self, _other: &Span) -> bool {
        true
    }
}

impl Hash for Span {
    fn hash<H: Hasher>(&self, _state: &mut H) {}
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// A unit as written in the source together with its resolved meaning.
/// The text is kept (whitespace removed) so the pretty-printer can
/// reproduce `km/day` instead of the SI rendering.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitRef {
    pub text: String,
    pub unit: Unit,
}

impl UnitRef {
    pub fn parse(text: &str) -> Result<UnitRef, UnitError> {
        let unit = Unit::parse(text)?;
        Ok(UnitRef {
            text: text.chars().filter(|c| !c.is_whitespace()).collect(),
            unit,
        })
    }

    pub fn dimensionless() -> UnitRef {
        UnitRef {
            text: String::new(),
            unit: Unit::DIMENSIONLESS,
        }
    }

    pub fn meter() -> UnitRef {
        UnitRef {
            text: "m".into(),
            unit: Unit::base(BaseUnit::M),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Model {
    pub agents: Vec<AgentDefinition>,
    pub actions: Vec<ActionDefinition>,
    pub tasks: Vec<TaskDefinition>,
}

impl Model {
    pub fn world(&self) -> Option<&AgentDefinition> {
        self.agents.iter().find(|a| a.kind == AgentKind::World)
    }

    pub fn patch(&self) -> Option<&AgentDefinition> {
        self.agents.iter().find(|a| a.kind == AgentKind::Patch)
    }

    /// Resolves `World`, `Patch` or a stage name.
    pub fn agent(&self, name: &str) -> Option<&AgentDefinition> {
        self.agents.iter().find(|a| a.name() == name)
    }

    pub fn stage(&self, name: &str) -> Option<&AgentDefinition> {
        self.agent(name).filter(|a| a.is_stage())
    }

    pub fn stages(&self) -> impl Iterator<Item = &AgentDefinition> {
        self.agents.iter().filter(|a| a.is_stage())
    }

    pub fn action(&self, name: &str) -> Option<&ActionDefinition> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty() && self.actions.is_empty() && self.tasks.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AgentKind {
    World,
    Patch,
    Stage {
        name: Identifier,
        species: Identifier,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentDefinition {
    pub kind: AgentKind,
    pub attributes: Vec<AttributeDeclaration>,
    pub span: Span,
}

/// One memory slot of an agent block.
#[derive(Clone, Debug, PartialEq)]
pub struct Slot<'a> {
    pub identifier: &'a str,
    pub unit: &'a UnitRef,
}

static METER: std::sync::OnceLock<UnitRef> = std::sync::OnceLock::new();

impl AgentDefinition {
    pub fn name(&self) -> &str {
        match &self.kind {
            AgentKind::World => "World",
            AgentKind::Patch => "Patch",
            AgentKind::Stage { name, .. } => name,
        }
    }

    pub fn is_stage(&self) -> bool {
        matches!(self.kind, AgentKind::Stage { .. })
    }

    /// Number of memory slots: the declared attributes plus `x` and `y`
    /// for stages.
    pub fn size(&self) -> usize {
        self.attributes.len() + if self.is_stage() { 2 } else { 0 }
    }

    /// Slots in memory order: `x`, `y` (stages only), then declarations.
    pub fn slots(&self) -> Vec<Slot<'_>> {
        let mut slots = Vec::with_capacity(self.size());
        if self.is_stage() {
            let meter = METER.get_or_init(UnitRef::meter);
            slots.push(Slot {
                identifier: "x",
                unit: meter,
            });
            slots.push(Slot {
                identifier: "y",
                unit: meter,
            });
        }
        slots.extend(self.attributes.iter().map(|a| Slot {
            identifier: &a.identifier,
            unit: &a.unit,
        }));
        slots
    }

    pub fn slot_offset(&self, identifier: &str) -> Option<usize> {
        self.slots().iter().position(|s| s.identifier == identifier)
    }

    pub fn attribute_unit(&self, identifier: &str) -> Option<Unit> {
        self.slots()
            .iter()
            .find(|s| s.identifier == identifier)
            .map(|s| s.unit.unit)
    }

    pub fn declaration(&self, identifier: &str) -> Option<&AttributeDeclaration> {
        self.attributes.iter().find(|a| a.identifier == identifier)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeDeclaration {
    pub identifier: Identifier,
    pub unit: UnitRef,
    /// Closed expression: no attribute, utility or placeholder references.
    pub initial: Option<Expression>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionDefinition {
    pub name: Identifier,
    pub definitions: Vec<AttributeDefinition>,
    pub utilities: Vec<UtilityDefinition>,
    pub lifecycle: Vec<LifecycleDirective>,
    pub span: Span,
}

impl ActionDefinition {
    pub fn utility(&self, identifier: &str) -> Option<&UtilityDefinition> {
        self.utilities.iter().find(|u| u.identifier == identifier)
    }

    /// Visits every top-level expression of the action: right-hand sides,
    /// utility bodies, spawn counts and guard operands.
    pub fn for_each_expression(&self, mut f: impl FnMut(&Expression)) {
        for d in &self.definitions {
            f(&d.expression);
        }
        for u in &self.utilities {
            f(&u.expression);
        }
        for l in &self.lifecycle {
            l.for_each_expression(&mut f);
        }
    }

    /// Rebuilds the action with every top-level expression mapped by `f`.
    pub fn map_expressions(&self, mut f: impl FnMut(&Expression) -> Expression) -> ActionDefinition {
        let mut out = self.clone();
        for d in &mut out.definitions {
            d.expression = f(&d.expression);
        }
        for u in &mut out.utilities {
            u.expression = f(&u.expression);
        }
        for l in &mut out.lifecycle {
            l.map_expressions(&mut f);
        }
        out
    }

    /// Placeholder names that a task must bind to run this action.
    pub fn placeholders(&self) -> BTreeSet<Identifier> {
        let mut names = BTreeSet::new();
        self.for_each_expression(|e| {
            e.walk(&mut |node| {
                if let Expression::Placeholder(id) = node {
                    names.insert(id.clone());
                }
            })
        });
        names
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Decorator {
    Assign,
    Delta,
    Differential,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeDefinition {
    pub variable: AttributeVariable,
    pub decorator: Decorator,
    pub expression: Expression,
    pub span: Span,
}

/// Which agent an attribute reference resolves against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AgentRef {
    /// The performer of the action (`my`).
    My,
    World,
    /// The patch under the performer.
    Here,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AttributeVariable {
    pub agent: AgentRef,
    pub identifier: Identifier,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtilityDefinition {
    pub identifier: Identifier,
    pub expression: Expression,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    Cos,
    Sin,
    Tan,
    Exp,
    Ln,
    Log,
    Sqrt,
    Abs,
    Floor,
    Ceiling,
    Min,
    Max,
}

impl Builtin {
    pub const ALL: [Builtin; 12] = [
        Builtin::Cos,
        Builtin::Sin,
        Builtin::Tan,
        Builtin::Exp,
        Builtin::Ln,
        Builtin::Log,
        Builtin::Sqrt,
        Builtin::Abs,
        Builtin::Floor,
        Builtin::Ceiling,
        Builtin::Min,
        Builtin::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Cos => "cos",
            Builtin::Sin => "sin",
            Builtin::Tan => "tan",
            Builtin::Exp => "exp",
            Builtin::Ln => "ln",
            Builtin::Log => "log",
            Builtin::Sqrt => "sqrt",
            Builtin::Abs => "abs",
            Builtin::Floor => "floor",
            Builtin::Ceiling => "ceiling",
            Builtin::Min => "min",
            Builtin::Max => "max",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Builtin::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::Min | Builtin::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expression {
    Attribute(AttributeVariable),
    Utility(Identifier),
    Placeholder(Identifier),
    /// Non-negative number with the unit it was written in.
    Literal {
        value: f64,
        unit: UnitRef,
    },
    DeltaTime,
    Negate(Box<Expression>),
    Binary {
        op: BinaryOp,
        left: Box<Expression>,
        right: Box<Expression>,
    },
    Apply {
        function: Builtin,
        args: Vec<Expression>,
    },
    Uniform {
        low: Box<Expression>,
        high: Box<Expression>,
    },
    Normal {
        mean: Box<Expression>,
        sigma: Box<Expression>,
    },
    Gamma {
        shape: Box<Expression>,
        scale: Box<Expression>,
    },
    LogLogistic {
        scale: Box<Expression>,
        shape: Box<Expression>,
    },
    /// Attaches a unit to a dimensionless value.
    EnUnit {
        expr: Box<Expression>,
        unit: UnitRef,
    },
    /// Strips a unit, yielding a dimensionless value.
    DeUnit {
        expr: Box<Expression>,
        unit: UnitRef,
    },
    /// Heading towards the neighbouring patch with the largest value of a
    /// patch attribute.
    Direction {
        attribute: Identifier,
    },
}

impl Expression {
    pub fn literal(value: f64, unit: UnitRef) -> Expression {
        Expression::Literal { value, unit }
    }

    pub fn binary(op: BinaryOp, left: Expression, right: Expression) -> Expression {
        Expression::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn attribute(agent: AgentRef, identifier: &str) -> Expression {
        Expression::Attribute(AttributeVariable {
            agent,
            identifier: identifier.to_string(),
        })
    }

    /// Direct subexpressions, left to right.
    pub fn children(&self) -> Vec<&Expression> {
        use Expression::*;
        match self {
            Attribute(_) | Utility(_) | Placeholder(_) | Literal { .. } | DeltaTime
            | Direction { .. } => Vec::new(),
            Negate(e) | EnUnit { expr: e, .. } | DeUnit { expr: e, .. } => vec![e],
            Binary { left, right, .. } => vec![left, right],
            Apply { args, .. } => args.iter().collect(),
            Uniform { low: a, high: b }
            | Normal { mean: a, sigma: b }
            | Gamma { shape: a, scale: b }
            | LogLogistic { scale: a, shape: b } => vec![a, b],
        }
    }

    /// Pre-order traversal.
    pub fn walk(&self, f: &mut impl FnMut(&Expression)) {
        f(self);
        for child in self.children() {
            child.walk(f);
        }
    }

    /// Bottom-up rewrite: children are rebuilt first, then `f` may replace
    /// the node. Returning `None` keeps the rebuilt node.
    pub fn rewrite(&self, f: &mut impl FnMut(&Expression) -> Option<Expression>) -> Expression {
        use Expression::*;
        let mut go = |e: &Expression| Box::new(e.rewrite(f));
        let rebuilt = match self {
            Attribute(_) | Utility(_) | Placeholder(_) | Literal { .. } | DeltaTime
            | Direction { .. } => self.clone(),
            Negate(e) => Negate(go(e)),
            EnUnit { expr, unit } => EnUnit {
                expr: go(expr),
                unit: unit.clone(),
            },
            DeUnit { expr, unit } => DeUnit {
                expr: go(expr),
                unit: unit.clone(),
            },
            Binary { op, left, right } => Binary {
                op: *op,
                left: go(left),
                right: go(right),
            },
            Apply { function, args } => Apply {
                function: *function,
                args: args.iter().map(|a| *go(a)).collect(),
            },
            Uniform { low, high } => Uniform {
                low: go(low),
                high: go(high),
            },
            Normal { mean, sigma } => Normal {
                mean: go(mean),
                sigma: go(sigma),
            },
            Gamma { shape, scale } => Gamma {
                shape: go(shape),
                scale: go(scale),
            },
            LogLogistic { scale, shape } => LogLogistic {
                scale: go(scale),
                shape: go(shape),
            },
        };
        f(&rebuilt).unwrap_or(rebuilt)
    }

    /// Replaces placeholder references by their bound expressions. Unbound
    /// placeholders are left in place.
    pub fn substitute(&self, bindings: &BTreeMap<&str, &Expression>) -> Expression {
        self.rewrite(&mut |e| match e {
            Expression::Placeholder(id) => bindings.get(id.as_str()).map(|&b| b.clone()),
            _ => None,
        })
    }

    /// True when the expression reads no attribute, utility or placeholder
    /// and needs no spatial context.
    pub fn is_closed(&self) -> bool {
        let mut closed = true;
        self.walk(&mut |e| {
            if matches!(
                e,
                Expression::Attribute(_)
                    | Expression::Utility(_)
                    | Expression::Placeholder(_)
                    | Expression::Direction { .. }
            ) {
                closed = false;
            }
        });
        closed
    }

    /// Utility identifiers referenced anywhere in the expression.
    pub fn utility_refs(&self) -> BTreeSet<Identifier> {
        let mut names = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expression::Utility(id) = e {
                names.insert(id.clone());
            }
        });
        names
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RelOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
        }
    }

    pub fn holds(self, left: f64, right: f64) -> bool {
        match self {
            RelOp::Lt => left < right,
            RelOp::Le => left <= right,
            RelOp::Gt => left > right,
            RelOp::Ge => left >= right,
        }
    }
}

/// Guard of a lifecycle directive. Booleans are not values in the
/// language, so comparisons only exist here.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub left: Expression,
    pub op: RelOp,
    pub right: Expression,
}

/// Stage changes, births and deaths. These sit beside the attribute
/// definitions of an action and are evaluated after them.
#[derive(Clone, Debug, PartialEq)]
pub enum LifecycleDirective {
    Become {
        target: Identifier,
        guard: Comparison,
        span: Span,
    },
    Spawn {
        stage: Identifier,
        count: Expression,
        guard: Option<Comparison>,
        span: Span,
    },
    Die {
        guard: Comparison,
        span: Span,
    },
}

impl LifecycleDirective {
    pub fn span(&self) -> Span {
        match self {
            LifecycleDirective::Become { span, .. }
            | LifecycleDirective::Spawn { span, .. }
            | LifecycleDirective::Die { span, .. } => *span,
        }
    }

    pub fn guard(&self) -> Option<&Comparison> {
        match self {
            LifecycleDirective::Become { guard, .. } | LifecycleDirective::Die { guard, .. } => {
                Some(guard)
            }
            LifecycleDirective::Spawn { guard, .. } => guard.as_ref(),
        }
    }

    fn for_each_expression(&self, f: &mut impl FnMut(&Expression)) {
        if let LifecycleDirective::Spawn { count, .. } = self {
            f(count);
        }
        if let Some(g) = self.guard() {
            f(&g.left);
            f(&g.right);
        }
    }

    fn map_expressions(&mut self, f: &mut impl FnMut(&Expression) -> Expression) {
        let guard = match self {
            LifecycleDirective::Become { guard, .. } | LifecycleDirective::Die { guard, .. } => {
                Some(guard)
            }
            LifecycleDirective::Spawn { count, guard, .. } => {
                *count = f(count);
                guard.as_mut()
            }
        };
        if let Some(g) = guard {
            g.left = f(&g.left);
            g.right = f(&g.right);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Binding {
    pub placeholder: Identifier,
    pub expression: Expression,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskDefinition {
    pub agent: Identifier,
    pub action: Identifier,
    /// Keys are unique; order is the source order.
    pub bindings: Vec<Binding>,
    pub span: Span,
}

impl TaskDefinition {
    pub fn binding(&self, placeholder: &str) -> Option<&Expression> {
        self.bindings
            .iter()
            .find(|b| b.placeholder == placeholder)
            .map(|b| &b.expression)
    }

    pub fn binding_map(&self) -> BTreeMap<&str, &Expression> {
        self.bindings
            .iter()
            .map(|b| (b.placeholder.as_str(), &b.expression))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decl(name: &str, unit: &str) -> AttributeDeclaration {
        AttributeDeclaration {
            identifier: name.into(),
            unit: UnitRef::parse(unit).unwrap(),
            initial: None,
            span: Span::default(),
        }
    }

    fn stage(name: &str, attrs: Vec<AttributeDeclaration>) -> AgentDefinition {
        AgentDefinition {
            kind: AgentKind::Stage {
                name: name.into(),
                species: "Grasshopper".into(),
            },
            attributes: attrs,
            span: Span::default(),
        }
    }

    #[test]
    fn agent_sizes() {
        assert_eq!(stage("Egg", vec![decl("age", "day")]).size(), 3);
        let world = AgentDefinition {
            kind: AgentKind::World,
            attributes: vec![decl("temperature", "degreeC")],
            span: Span::default(),
        };
        assert_eq!(world.size(), 1);
        assert_eq!(stage("Ghost", vec![]).size(), 2);
    }

    #[test]
    fn slot_layout_puts_position_first() {
        let adult = stage("Adult", vec![decl("age", "day"), decl("reserve", "g")]);
        assert_eq!(adult.slot_offset("x"), Some(0));
        assert_eq!(adult.slot_offset("y"), Some(1));
        assert_eq!(adult.slot_offset("age"), Some(2));
        assert_eq!(adult.slot_offset("reserve"), Some(3));
        assert_eq!(adult.slot_offset("nope"), None);
        assert_eq!(adult.attribute_unit("x"), Some(Unit::base(BaseUnit::M)));
    }

    #[test]
    fn spans_are_ignored_by_equality() {
        let mut a = decl("age", "day");
        let b = decl("age", "day");
        a.span = Span::new(4, 9);
        assert_eq!(a, b);
    }

    #[test]
    fn substitution_reaches_nested_nodes() {
        let body = Expression::binary(
            BinaryOp::Mul,
            Expression::Apply {
                function: Builtin::Cos,
                args: vec![Expression::Placeholder("heading".into())],
            },
            Expression::Placeholder("speed".into()),
        );
        let speed = Expression::literal(2.0, UnitRef::parse("m/s").unwrap());
        let bindings = BTreeMap::from([("speed", &speed)]);
        let out = body.substitute(&bindings);
        let mut remaining = Vec::new();
        out.walk(&mut |e| {
            if let Expression::Placeholder(p) = e {
                remaining.push(p.clone());
            }
        });
        assert_eq!(remaining, vec!["heading".to_string()]);
    }
}
