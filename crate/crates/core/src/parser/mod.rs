//! Concrete syntax to [`Model`], and back again via [`pretty_print`].
//!
//! The surface language looks like this:
//!
//! ```text
//! Adult is Grasshopper with
//!     age [day].
//!
//! to move is
//!     my d/dt x' = cos(theta) * r
//!     my d/dt y' = sin(theta) * r
//! where
//!     theta = the heading
//!     r = the speed.
//!
//! Adult move where
//!     the speed -> uniform 0 [km/day] to 0.5 [km/day]
//!     the heading -> direction neighbor's grass.
//! ```
//!
//! Every definition ends with `.`. Statements inside a definition are
//! separated only by juxtaposition. `#` starts a comment that runs to the
//! end of the line.

mod lexer;
mod pretty;

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::ast::*;
use lexer::{Keyword, Tok, Token};

pub use lexer::KEYWORDS;
pub use pretty::{pretty_print, print_expression};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct SourceError {
    pub message: String,
    pub line: u32,
    pub column: u32,
}

impl SourceError {
    pub fn new(message: impl Into<String>, span: Span) -> SourceError {
        SourceError {
            message: message.into(),
            line: span.line,
            column: span.column,
        }
    }

    pub fn span(&self) -> Span {
        Span::new(self.line, self.column)
    }
}

/// Parses a complete model file.
pub fn parse_model(text: &str) -> Result<Model, SourceError> {
    let tokens = lexer::tokenize(text)?;
    let mut parser = Parser::new(text, tokens);
    let model = parser.model()?;
    validate(&model)?;
    Ok(model)
}

/// Parses a single expression (the whole input must be consumed).
pub fn parse_expression(text: &str) -> Result<Expression, SourceError> {
    let tokens = lexer::tokenize(text)?;
    let mut parser = Parser::new(text, tokens);
    let expr = parser.expression()?;
    parser.expect(Tok::Eof)?;
    Ok(expr)
}

struct Parser<'a> {
    text: &'a str,
    index: lexer::LineIndex,
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SourceError>;

impl<'a> Parser<'a> {
    fn new(text: &'a str, tokens: Vec<Token>) -> Self {
        Parser {
            text,
            index: lexer::LineIndex::new(text),
            tokens,
            pos: 0,
        }
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Tok {
        let tok = self.tokens[self.pos].tok.clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        tok
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn unexpected<T>(&self, expected: &str) -> PResult<T> {
        Err(SourceError::new(
            format!("expected {expected}, found {}", self.peek().describe()),
            self.span(),
        ))
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.unexpected(&tok.describe())
        }
    }

    fn expect_kw(&mut self, kw: Keyword) -> PResult<()> {
        self.expect(Tok::Kw(kw))
    }

    fn ident(&mut self) -> PResult<Identifier> {
        match self.peek() {
            Tok::Ident(name) => {
                let name = name.clone();
                self.advance();
                Ok(name)
            }
            _ => self.unexpected("an identifier"),
        }
    }

    fn unit(&mut self) -> PResult<UnitRef> {
        let Tok::Unit(text, offset) = self.peek().clone() else {
            return self.unexpected("a unit in brackets");
        };
        let span = self.span();
        self.advance();
        UnitRef::parse(&text).map_err(|e| {
            let at = e
                .offset()
                .map_or(span, |o| self.index.span(self.text, offset + o));
            SourceError::new(e.to_string(), at)
        })
    }

    fn model(&mut self) -> PResult<Model> {
        let mut model = Model::default();
        loop {
            let span = self.span();
            match self.peek().clone() {
                Tok::Eof => return Ok(model),
                Tok::Kw(Keyword::To) => model.actions.push(self.action()?),
                Tok::Ident(name) => match self.peek_at(1) {
                    Tok::Kw(Keyword::Is) => model.agents.push(self.stage()?),
                    Tok::Kw(Keyword::With) => {
                        let kind = match name.as_str() {
                            "World" => AgentKind::World,
                            "Patch" => AgentKind::Patch,
                            _ => {
                                return Err(SourceError::new(
                                    format!("`{name}` is neither World nor Patch; stages are written `{name} is <Species> with`"),
                                    span,
                                ))
                            }
                        };
                        self.advance();
                        self.advance();
                        let attributes = self.attribute_declarations()?;
                        model.agents.push(AgentDefinition {
                            kind,
                            attributes,
                            span,
                        });
                    }
                    Tok::Ident(_) => model.tasks.push(self.task()?),
                    _ => {
                        self.advance();
                        return self.unexpected("`is`, `with` or an action name");
                    }
                },
                _ => return self.unexpected("a definition"),
            }
        }
    }

    fn stage(&mut self) -> PResult<AgentDefinition> {
        let span = self.span();
        let name = self.ident()?;
        if name == "World" || name == "Patch" {
            return Err(SourceError::new(
                format!("`{name}` is reserved for the environment agents"),
                span,
            ));
        }
        self.expect_kw(Keyword::Is)?;
        let species = self.ident()?;
        self.expect_kw(Keyword::With)?;
        // Stages may declare nothing beyond their implicit position.
        let attributes = if self.eat(&Tok::Dot) {
            Vec::new()
        } else {
            self.attribute_declarations()?
        };
        Ok(AgentDefinition {
            kind: AgentKind::Stage { name, species },
            attributes,
            span,
        })
    }

    fn attribute_declarations(&mut self) -> PResult<Vec<AttributeDeclaration>> {
        let mut attributes = Vec::new();
        loop {
            let span = self.span();
            let identifier = self.ident()?;
            let unit = self.unit()?;
            let initial = if self.eat(&Tok::Eq) {
                Some(self.expression()?)
            } else {
                None
            };
            attributes.push(AttributeDeclaration {
                identifier,
                unit,
                initial,
                span,
            });
            if self.eat(&Tok::Dot) {
                return Ok(attributes);
            }
        }
    }

    fn action(&mut self) -> PResult<ActionDefinition> {
        let span = self.span();
        self.expect_kw(Keyword::To)?;
        let name = self.ident()?;
        self.expect_kw(Keyword::Is)?;
        let mut action = ActionDefinition {
            name,
            definitions: Vec::new(),
            utilities: Vec::new(),
            lifecycle: Vec::new(),
            span,
        };
        loop {
            match self.peek() {
                Tok::Kw(Keyword::My | Keyword::World | Keyword::Here) => self.statement(&mut action)?,
                _ if action.definitions.is_empty() && action.lifecycle.is_empty() => {
                    return self.unexpected("a statement starting with `my`, `world` or `here`")
                }
                _ => break,
            }
        }
        if self.eat(&Tok::Kw(Keyword::Where)) {
            loop {
                let span = self.span();
                let identifier = self.ident()?;
                self.expect(Tok::Eq)?;
                let expression = self.expression()?;
                action.utilities.push(UtilityDefinition {
                    identifier,
                    expression,
                    span,
                });
                if !matches!(self.peek(), Tok::Ident(_)) {
                    break;
                }
            }
        }
        self.expect(Tok::Dot)?;
        Ok(action)
    }

    fn statement(&mut self, action: &mut ActionDefinition) -> PResult<()> {
        let span = self.span();
        let agent = match self.advance() {
            Tok::Kw(Keyword::My) => AgentRef::My,
            Tok::Kw(Keyword::World) => {
                self.expect(Tok::Possessive)?;
                AgentRef::World
            }
            _ => {
                self.expect(Tok::Possessive)?;
                AgentRef::Here
            }
        };
        if agent == AgentRef::My {
            if let Some(directive) = self.lifecycle(span)? {
                action.lifecycle.push(directive);
                return Ok(());
            }
        }
        let decorator = match self.peek() {
            Tok::Kw(Keyword::Delta) => {
                self.advance();
                Decorator::Delta
            }
            Tok::DDt => {
                self.advance();
                Decorator::Differential
            }
            _ => Decorator::Assign,
        };
        let identifier = self.ident()?;
        self.expect(Tok::Prime)?;
        self.expect(Tok::Eq)?;
        let expression = self.expression()?;
        action.definitions.push(AttributeDefinition {
            variable: AttributeVariable { agent, identifier },
            decorator,
            expression,
            span,
        });
        Ok(())
    }

    fn lifecycle(&mut self, span: Span) -> PResult<Option<LifecycleDirective>> {
        let directive = match self.peek() {
            Tok::Kw(Keyword::Become) => {
                self.advance();
                let target = self.ident()?;
                self.expect_kw(Keyword::When)?;
                LifecycleDirective::Become {
                    target,
                    guard: self.comparison()?,
                    span,
                }
            }
            Tok::Kw(Keyword::Spawn) => {
                self.advance();
                let stage = self.ident()?;
                self.expect(Tok::Prime)?;
                self.expect(Tok::Eq)?;
                let count = self.expression()?;
                let guard = if self.eat(&Tok::Kw(Keyword::When)) {
                    Some(self.comparison()?)
                } else {
                    None
                };
                LifecycleDirective::Spawn {
                    stage,
                    count,
                    guard,
                    span,
                }
            }
            Tok::Kw(Keyword::Die) => {
                self.advance();
                self.expect_kw(Keyword::When)?;
                LifecycleDirective::Die {
                    guard: self.comparison()?,
                    span,
                }
            }
            _ => return Ok(None),
        };
        Ok(Some(directive))
    }

    fn comparison(&mut self) -> PResult<Comparison> {
        let left = self.expression()?;
        let op = match self.peek() {
            Tok::Lt => RelOp::Lt,
            Tok::Le => RelOp::Le,
            Tok::Gt => RelOp::Gt,
            Tok::Ge => RelOp::Ge,
            _ => return self.unexpected("a comparison operator"),
        };
        self.advance();
        let right = self.expression()?;
        Ok(Comparison { left, op, right })
    }

    fn task(&mut self) -> PResult<TaskDefinition> {
        let span = self.span();
        let agent = self.ident()?;
        let action = self.ident()?;
        let mut bindings = Vec::new();
        if self.eat(&Tok::Kw(Keyword::Where)) {
            loop {
                let span = self.span();
                self.expect_kw(Keyword::The)?;
                let placeholder = self.ident()?;
                self.expect(Tok::Arrow)?;
                let expression = self.expression()?;
                bindings.push(Binding {
                    placeholder,
                    expression,
                    span,
                });
                if self.peek() != &Tok::Kw(Keyword::The) {
                    break;
                }
            }
        }
        self.expect(Tok::Dot)?;
        Ok(TaskDefinition {
            agent,
            action,
            bindings,
            span,
        })
    }

    // expr := additive (("as" | "in") unit)*
    fn expression(&mut self) -> PResult<Expression> {
        let mut expr = self.additive()?;
        loop {
            match self.peek() {
                Tok::Kw(Keyword::As) => {
                    self.advance();
                    let unit = self.unit()?;
                    expr = Expression::EnUnit {
                        expr: Box::new(expr),
                        unit,
                    };
                }
                Tok::Kw(Keyword::In) => {
                    self.advance();
                    let unit = self.unit()?;
                    expr = Expression::DeUnit {
                        expr: Box::new(expr),
                        unit,
                    };
                }
                _ => return Ok(expr),
            }
        }
    }

    fn additive(&mut self) -> PResult<Expression> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(left),
            };
            self.advance();
            let right = self.multiplicative()?;
            left = Expression::binary(op, left, right);
        }
    }

    fn multiplicative(&mut self) -> PResult<Expression> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(left),
            };
            self.advance();
            let right = self.unary()?;
            left = Expression::binary(op, left, right);
        }
    }

    fn unary(&mut self) -> PResult<Expression> {
        if self.eat(&Tok::Minus) {
            Ok(Expression::Negate(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    // Right-associative; the exponent may itself be negated.
    fn power(&mut self) -> PResult<Expression> {
        let base = self.primary()?;
        if self.eat(&Tok::Caret) {
            let exponent = self.unary()?;
            Ok(Expression::binary(BinaryOp::Pow, base, exponent))
        } else {
            Ok(base)
        }
    }

    fn pair(&mut self) -> PResult<(Box<Expression>, Box<Expression>)> {
        self.expect(Tok::LParen)?;
        let a = self.expression()?;
        self.expect(Tok::Comma)?;
        let b = self.expression()?;
        self.expect(Tok::RParen)?;
        Ok((Box::new(a), Box::new(b)))
    }

    fn primary(&mut self) -> PResult<Expression> {
        let span = self.span();
        let start = self.pos;
        match self.advance() {
            Tok::Number(value) => {
                let unit = if matches!(self.peek(), Tok::Unit(..)) {
                    self.unit()?
                } else {
                    UnitRef::dimensionless()
                };
                Ok(Expression::Literal { value, unit })
            }
            Tok::LParen => {
                let e = self.expression()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Kw(Keyword::My) => Ok(Expression::Attribute(AttributeVariable {
                agent: AgentRef::My,
                identifier: self.ident()?,
            })),
            Tok::Kw(k @ (Keyword::World | Keyword::Here)) => {
                self.expect(Tok::Possessive)?;
                let agent = if k == Keyword::World {
                    AgentRef::World
                } else {
                    AgentRef::Here
                };
                Ok(Expression::Attribute(AttributeVariable {
                    agent,
                    identifier: self.ident()?,
                }))
            }
            Tok::Kw(Keyword::The) => Ok(Expression::Placeholder(self.ident()?)),
            Tok::Kw(Keyword::Delta) => match self.advance() {
                Tok::Ident(word) if word == "time" => Ok(Expression::DeltaTime),
                _ => Err(SourceError::new("expected `time` after `delta`", span)),
            },
            Tok::Kw(Keyword::Uniform) => {
                let low = self.additive()?;
                self.expect_kw(Keyword::To)?;
                let high = self.additive()?;
                Ok(Expression::Uniform {
                    low: Box::new(low),
                    high: Box::new(high),
                })
            }
            Tok::Kw(Keyword::Normal) => {
                let (mean, sigma) = self.pair()?;
                Ok(Expression::Normal { mean, sigma })
            }
            Tok::Kw(Keyword::Gamma) => {
                let (shape, scale) = self.pair()?;
                Ok(Expression::Gamma { shape, scale })
            }
            Tok::Kw(Keyword::LogLogistic) => {
                let (scale, shape) = self.pair()?;
                Ok(Expression::LogLogistic { scale, shape })
            }
            Tok::Kw(Keyword::Direction) => {
                self.expect_kw(Keyword::Neighbor)?;
                self.expect(Tok::Possessive)?;
                Ok(Expression::Direction {
                    attribute: self.ident()?,
                })
            }
            Tok::Ident(name) => {
                if self.peek() != &Tok::LParen {
                    return Ok(Expression::Utility(name));
                }
                let function = Builtin::from_name(&name).ok_or_else(|| {
                    SourceError::new(format!("unknown function `{name}`"), span)
                })?;
                self.advance();
                let mut args = Vec::new();
                if self.peek() != &Tok::RParen {
                    loop {
                        args.push(self.expression()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen)?;
                Ok(Expression::Apply { function, args })
            }
            _ => {
                self.pos = start;
                self.unexpected("an expression")
            }
        }
    }
}

/// Checks the structural invariants a parsed model must satisfy: unique
/// names, a single World and Patch, closed initializers.
fn validate(model: &Model) -> PResult<()> {
    let mut agents = HashSet::new();
    for agent in &model.agents {
        if !agents.insert(agent.name()) {
            return Err(SourceError::new(
                format!("duplicate definition of agent `{}`", agent.name()),
                agent.span,
            ));
        }
        let mut attrs = HashSet::new();
        if agent.is_stage() {
            attrs.insert("x");
            attrs.insert("y");
        }
        for decl in &agent.attributes {
            if !attrs.insert(&decl.identifier) {
                return Err(SourceError::new(
                    format!(
                        "attribute `{}` is already defined on `{}`",
                        decl.identifier,
                        agent.name()
                    ),
                    decl.span,
                ));
            }
            if decl.initial.as_ref().is_some_and(|e| !e.is_closed()) {
                return Err(SourceError::new(
                    format!(
                        "initial value of `{}` must not refer to attributes, utilities or placeholders",
                        decl.identifier
                    ),
                    decl.span,
                ));
            }
        }
    }
    let mut actions = HashSet::new();
    for action in &model.actions {
        if !actions.insert(&action.name) {
            return Err(SourceError::new(
                format!("duplicate definition of action `{}`", action.name),
                action.span,
            ));
        }
        let mut utilities = HashSet::new();
        for u in &action.utilities {
            if !utilities.insert(&u.identifier) {
                return Err(SourceError::new(
                    format!("utility `{}` is defined twice in `{}`", u.identifier, action.name),
                    u.span,
                ));
            }
        }
    }
    for task in &model.tasks {
        let mut keys = HashSet::new();
        for b in &task.bindings {
            if !keys.insert(&b.placeholder) {
                return Err(SourceError::new(
                    format!("placeholder `{}` is bound twice", b.placeholder),
                    b.span,
                ));
            }
        }
    }
    Ok(())
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_print(self))
    }
}
