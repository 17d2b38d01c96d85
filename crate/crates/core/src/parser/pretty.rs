use std::fmt::Write;

use crate::ast::*;

const INDENT: &str = "    ";

/// Renders a model in canonical layout. Reparsing the output yields a
/// model equal to the input.
pub fn pretty_print(model: &Model) -> String {
    let mut blocks = Vec::new();
    blocks.extend(model.agents.iter().map(print_agent));
    blocks.extend(model.actions.iter().map(print_action));
    blocks.extend(model.tasks.iter().map(print_task));
    let mut out = blocks.join("\n");
    if !out.is_empty() && !out.ends_with('\n') {
        out.push('\n');
    }
    out
}

fn print_agent(agent: &AgentDefinition) -> String {
    let mut out = match &agent.kind {
        AgentKind::World => "World with\n".to_string(),
        AgentKind::Patch => "Patch with\n".to_string(),
        AgentKind::Stage { name, species } => format!("{name} is {species} with\n"),
    };
    let lines: Vec<String> = agent
        .attributes
        .iter()
        .map(|decl| {
            let mut line = format!("{INDENT}{} [{}]", decl.identifier, decl.unit.text);
            if let Some(init) = &decl.initial {
                let _ = write!(line, " = {}", print_expression(init));
            }
            line
        })
        .collect();
    if lines.is_empty() {
        out.pop();
    }
    out.push_str(&lines.join("\n"));
    out.push_str(".\n");
    out
}

fn print_action(action: &ActionDefinition) -> String {
    let mut lines = Vec::new();
    for d in &action.definitions {
        let target = match d.variable.agent {
            AgentRef::My => "my",
            AgentRef::World => "world's",
            AgentRef::Here => "here's",
        };
        let decorator = match d.decorator {
            Decorator::Assign => "",
            Decorator::Delta => "delta ",
            Decorator::Differential => "d/dt ",
        };
        lines.push(format!(
            "{INDENT}{target} {decorator}{}' = {}",
            d.variable.identifier,
            print_expression(&d.expression)
        ));
    }
    for l in &action.lifecycle {
        let line = match l {
            LifecycleDirective::Become { target, guard, .. } => {
                format!("my become {target} when {}", print_comparison(guard))
            }
            LifecycleDirective::Spawn {
                stage,
                count,
                guard,
                ..
            } => {
                let mut s = format!("my spawn {stage}' = {}", print_expression(count));
                if let Some(g) = guard {
                    let _ = write!(s, " when {}", print_comparison(g));
                }
                s
            }
            LifecycleDirective::Die { guard, .. } => {
                format!("my die when {}", print_comparison(guard))
            }
        };
        lines.push(format!("{INDENT}{line}"));
    }
    if !action.utilities.is_empty() {
        lines.push("where".to_string());
        for u in &action.utilities {
            lines.push(format!(
                "{INDENT}{} = {}",
                u.identifier,
                print_expression(&u.expression)
            ));
        }
    }
    format!("to {} is\n{}.\n", action.name, lines.join("\n"))
}

fn print_task(task: &TaskDefinition) -> String {
    if task.bindings.is_empty() {
        return format!("{} {}.\n", task.agent, task.action);
    }
    let lines: Vec<String> = task
        .bindings
        .iter()
        .map(|b| {
            format!(
                "{INDENT}the {} -> {}",
                b.placeholder,
                print_expression(&b.expression)
            )
        })
        .collect();
    format!("{} {} where\n{}.\n", task.agent, task.action, lines.join("\n"))
}

fn print_comparison(c: &Comparison) -> String {
    format!(
        "{} {} {}",
        print_expression(&c.left),
        c.op.symbol(),
        print_expression(&c.right)
    )
}

// Binding strength, loosest first. Casts and `uniform ... to ...` have no
// closing delimiter, so they are parenthesized everywhere except at the top.
const CAST: u8 = 0;
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const PREFIX: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

fn precedence(e: &Expression) -> u8 {
    match e {
        Expression::EnUnit { .. } | Expression::DeUnit { .. } | Expression::Uniform { .. } => CAST,
        Expression::Binary { op, .. } => match op {
            BinaryOp::Add | BinaryOp::Sub => SUM,
            BinaryOp::Mul | BinaryOp::Div => PRODUCT,
            BinaryOp::Pow => POWER,
        },
        Expression::Negate(_) => PREFIX,
        _ => ATOM,
    }
}

pub fn print_expression(e: &Expression) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, CAST);
    out
}

fn write_expr(out: &mut String, e: &Expression, min: u8) {
    if precedence(e) < min {
        out.push('(');
        write_expr(out, e, CAST);
        out.push(')');
        return;
    }
    match e {
        Expression::Attribute(v) => {
            let prefix = match v.agent {
                AgentRef::My => "my ",
                AgentRef::World => "world's ",
                AgentRef::Here => "here's ",
            };
            out.push_str(prefix);
            out.push_str(&v.identifier);
        }
        Expression::Utility(id) => out.push_str(id),
        Expression::Placeholder(id) => {
            out.push_str("the ");
            out.push_str(id);
        }
        Expression::Literal { value, unit } => {
            let _ = write!(out, "{value}");
            if !unit.text.is_empty() {
                let _ = write!(out, " [{}]", unit.text);
            }
        }
        Expression::DeltaTime => out.push_str("delta time"),
        Expression::Negate(inner) => {
            out.push('-');
            write_expr(out, inner, PREFIX);
        }
        Expression::Binary { op, left, right } => {
            let (lmin, rmin) = match op {
                BinaryOp::Add | BinaryOp::Sub => (SUM, PRODUCT),
                BinaryOp::Mul | BinaryOp::Div => (PRODUCT, PREFIX),
                BinaryOp::Pow => (ATOM, PREFIX),
            };
            write_expr(out, left, lmin);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, right, rmin);
        }
        Expression::Apply { function, args } => {
            out.push_str(function.name());
            write_args(out, args.iter());
        }
        Expression::Uniform { low, high } => {
            out.push_str("uniform ");
            write_expr(out, low, SUM);
            out.push_str(" to ");
            write_expr(out, high, SUM);
        }
        Expression::Normal { mean, sigma } => {
            out.push_str("normal");
            write_args(out, [mean, sigma].into_iter().map(|b| &**b));
        }
        Expression::Gamma { shape, scale } => {
            out.push_str("gamma");
            write_args(out, [shape, scale].into_iter().map(|b| &**b));
        }
        Expression::LogLogistic { scale, shape } => {
            out.push_str("loglogistic");
            write_args(out, [scale, shape].into_iter().map(|b| &**b));
        }
        Expression::EnUnit { expr, unit } => {
            write_expr(out, expr, CAST);
            let _ = write!(out, " as [{}]", unit.text);
        }
        Expression::DeUnit { expr, unit } => {
            write_expr(out, expr, CAST);
            let _ = write!(out, " in [{}]", unit.text);
        }
        Expression::Direction { attribute } => {
            out.push_str("direction neighbor's ");
            out.push_str(attribute);
        }
    }
}

fn write_args<'e>(out: &mut String, args: impl Iterator<Item = &'e Expression>) {
    out.push('(');
    for (i, a) in args.enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a, CAST);
    }
    out.push(')');
}
