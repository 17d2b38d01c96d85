//! Proptest strategies for syntax trees. Enabled with the `proptest`
//! feature; used by the round-trip tests.

use std::collections::BTreeSet;

use proptest::prelude::*;

use crate::ast::*;
use crate::parser::KEYWORDS;

const UNIT_TEXTS: [&str; 11] = [
    "", "m", "km/day", "kg.m/s^2", "day", "degreeC", "rad", "g", "m^2", "s^-1", "mol/K",
];

fn reserved(word: &str) -> bool {
    KEYWORDS.contains(&word) || Builtin::from_name(word).is_some() || matches!(word, "x" | "y")
}

pub fn identifier() -> impl Strategy<Value = Identifier> {
    "[a-z][a-z0-9_]{0,5}".prop_filter("reserved word", |s| !reserved(s))
}

pub fn stage_name() -> impl Strategy<Value = Identifier> {
    "[A-Z][a-z]{0,6}".prop_filter("environment name", |s| s != "World" && s != "Patch")
}

pub fn unit_ref() -> impl Strategy<Value = UnitRef> {
    proptest::sample::select(&UNIT_TEXTS[..]).prop_map(|t| UnitRef::parse(t).unwrap())
}

/// Finite, non-negative literal values (negation is an operator).
pub fn literal_value() -> impl Strategy<Value = f64> {
    prop_oneof![
        3 => (0u32..10_000).prop_map(|n| f64::from(n) / 100.0),
        1 => proptest::num::f64::POSITIVE | proptest::num::f64::ZERO,
    ]
    .prop_filter("finite", |v| v.is_finite())
}

fn literal() -> impl Strategy<Value = Expression> {
    (literal_value(), unit_ref()).prop_map(|(value, unit)| Expression::Literal { value, unit })
}

/// Expressions without references: valid attribute initializers.
pub fn closed_expression() -> impl Strategy<Value = Expression> {
    let leaf = prop_oneof![4 => literal(), 1 => Just(Expression::DeltaTime)];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expression::Negate(Box::new(e))),
            (binary_op(), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expression::binary(op, l, r)),
            (inner.clone(), inner).prop_map(|(l, h)| Expression::Uniform {
                low: Box::new(l),
                high: Box::new(h)
            }),
        ]
    })
}

fn binary_op() -> impl Strategy<Value = BinaryOp> {
    proptest::sample::select(&[
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Pow,
    ][..])
}

fn agent_ref() -> impl Strategy<Value = AgentRef> {
    proptest::sample::select(&[AgentRef::My, AgentRef::World, AgentRef::Here][..])
}

pub fn expression() -> impl Strategy<Value = Expression> {
    let leaf = prop_oneof![
        4 => literal(),
        2 => identifier().prop_map(Expression::Utility),
        1 => identifier().prop_map(Expression::Placeholder),
        2 => (agent_ref(), identifier()).prop_map(|(agent, identifier)| {
            Expression::Attribute(AttributeVariable { agent, identifier })
        }),
        1 => Just(Expression::DeltaTime),
        1 => identifier().prop_map(|attribute| Expression::Direction { attribute }),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        let boxed = || inner.clone().prop_map(Box::new);
        prop_oneof![
            boxed().prop_map(Expression::Negate),
            (binary_op(), boxed(), boxed())
                .prop_map(|(op, left, right)| Expression::Binary { op, left, right }),
            (proptest::sample::select(&Builtin::ALL[..]), inner.clone(), inner.clone()).prop_map(
                |(function, a, b)| {
                    let args = if function.arity() == 2 { vec![a, b] } else { vec![a] };
                    Expression::Apply { function, args }
                }
            ),
            (boxed(), boxed()).prop_map(|(low, high)| Expression::Uniform { low, high }),
            (boxed(), boxed()).prop_map(|(mean, sigma)| Expression::Normal { mean, sigma }),
            (boxed(), boxed()).prop_map(|(shape, scale)| Expression::Gamma { shape, scale }),
            (boxed(), boxed()).prop_map(|(scale, shape)| Expression::LogLogistic { scale, shape }),
            (boxed(), unit_ref()).prop_map(|(expr, unit)| Expression::EnUnit { expr, unit }),
            (boxed(), unit_ref()).prop_map(|(expr, unit)| Expression::DeUnit { expr, unit }),
        ]
    })
}

fn attributes(min: usize) -> impl Strategy<Value = Vec<AttributeDeclaration>> {
    proptest::collection::btree_set(identifier(), min..4).prop_flat_map(|names| {
        let n = names.len();
        (
            Just(names),
            proptest::collection::vec(
                (unit_ref(), proptest::option::of(closed_expression())),
                n,
            ),
        )
            .prop_map(|(names, parts)| {
                names
                    .into_iter()
                    .zip(parts)
                    .map(|(identifier, (unit, initial))| AttributeDeclaration {
                        identifier,
                        unit,
                        initial,
                        span: Span::default(),
                    })
                    .collect()
            })
    })
}

fn relop() -> impl Strategy<Value = RelOp> {
    proptest::sample::select(&[RelOp::Lt, RelOp::Le, RelOp::Gt, RelOp::Ge][..])
}

fn comparison() -> impl Strategy<Value = Comparison> {
    (expression(), relop(), expression()).prop_map(|(left, op, right)| Comparison { left, op, right })
}

fn lifecycle() -> impl Strategy<Value = LifecycleDirective> {
    let span = Span::default();
    prop_oneof![
        (stage_name(), comparison()).prop_map(move |(target, guard)| LifecycleDirective::Become {
            target,
            guard,
            span
        }),
        (stage_name(), expression(), proptest::option::of(comparison())).prop_map(
            move |(stage, count, guard)| LifecycleDirective::Spawn {
                stage,
                count,
                guard,
                span
            }
        ),
        comparison().prop_map(move |guard| LifecycleDirective::Die { guard, span }),
    ]
}

fn definition() -> impl Strategy<Value = AttributeDefinition> {
    (
        agent_ref(),
        identifier(),
        proptest::sample::select(&[Decorator::Assign, Decorator::Delta, Decorator::Differential][..]),
        expression(),
    )
        .prop_map(|(agent, identifier, decorator, expression)| AttributeDefinition {
            variable: AttributeVariable { agent, identifier },
            decorator,
            expression,
            span: Span::default(),
        })
}

fn action(name: Identifier) -> impl Strategy<Value = ActionDefinition> {
    (
        proptest::collection::vec(definition(), 0..3),
        proptest::collection::vec(lifecycle(), 0..2),
        proptest::collection::btree_map(identifier(), expression(), 0..3),
    )
        .prop_filter("an action needs a statement", |(d, l, _)| !d.is_empty() || !l.is_empty())
        .prop_map(move |(definitions, lifecycle, utilities)| ActionDefinition {
            name: name.clone(),
            definitions,
            lifecycle,
            utilities: utilities
                .into_iter()
                .map(|(identifier, expression)| UtilityDefinition {
                    identifier,
                    expression,
                    span: Span::default(),
                })
                .collect(),
            span: Span::default(),
        })
}

fn task() -> impl Strategy<Value = TaskDefinition> {
    (
        stage_name(),
        identifier(),
        proptest::collection::btree_map(identifier(), expression(), 0..3),
    )
        .prop_map(|(agent, action, bindings)| TaskDefinition {
            agent,
            action,
            bindings: bindings
                .into_iter()
                .map(|(placeholder, expression)| Binding {
                    placeholder,
                    expression,
                    span: Span::default(),
                })
                .collect(),
            span: Span::default(),
        })
}

/// Syntactically valid models. They are not necessarily well typed.
pub fn model() -> impl Strategy<Value = Model> {
    let environment = |kind: AgentKind| {
        proptest::option::of(attributes(1).prop_map(move |attributes| AgentDefinition {
            kind: kind.clone(),
            attributes,
            span: Span::default(),
        }))
    };
    let stages = proptest::collection::btree_set(stage_name(), 0..3).prop_flat_map(|names| {
        let names: Vec<_> = names.into_iter().collect();
        let n = names.len();
        (
            Just(names),
            proptest::collection::vec((stage_name(), attributes(0)), n),
        )
            .prop_map(|(names, parts)| {
                names
                    .into_iter()
                    .zip(parts)
                    .map(|(name, (species, attributes))| AgentDefinition {
                        kind: AgentKind::Stage { name, species },
                        attributes,
                        span: Span::default(),
                    })
                    .collect::<Vec<_>>()
            })
    });
    let actions = proptest::collection::btree_set(identifier(), 0..3).prop_flat_map(
        |names: BTreeSet<Identifier>| {
            names.into_iter().map(action).collect::<Vec<_>>()
        },
    );
    (
        environment(AgentKind::World),
        environment(AgentKind::Patch),
        stages,
        actions,
        proptest::collection::vec(task(), 0..3),
    )
        .prop_map(|(world, patch, stages, actions, tasks)| Model {
            agents: world.into_iter().chain(patch).chain(stages).collect(),
            actions,
            tasks,
        })
}
