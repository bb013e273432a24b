use super::{
    valid_name, Angle, Configuration, Instruction, Pulse, PulseLength, Quantity, SequenceError, SequenceProgram,
    Target, Unit, Validator,
};
use crate::spindynamics::Spin;

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let code = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in code.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token { text: &code[s..i], column: code[..s].chars().count() + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token { text: &code[s..], column: code[..s].chars().count() + 1 });
    }
    tokens
}

struct Frame {
    instructions: Vec<Instruction>,
    bright: u8,
    line: usize,
    column: usize,
    saved: Validator,
}

struct Parser {
    line: usize,
}

impl Parser {
    fn syntax(&self, column: usize, message: impl Into<String>) -> SequenceError {
        SequenceError::Syntax { line: self.line, column, message: message.into() }
    }

    fn validation(&self, column: usize, message: impl Into<String>) -> SequenceError {
        SequenceError::Validation { line: self.line, column, message: message.into() }
    }

    fn expect_arity(&self, tokens: &[Token<'_>], n: usize) -> Result<(), SequenceError> {
        if tokens.len() < n {
            let end = tokens.last().map_or(1, |t| t.column + t.text.chars().count());
            return Err(self.syntax(end, format!("`{}` expects {} argument(s)", tokens[0].text, n - 1)));
        }
        if tokens.len() > n {
            return Err(self.syntax(tokens[n].column, format!("unexpected `{}`", tokens[n].text)));
        }
        Ok(())
    }
}

/// Splits a leading decimal number off `s`; returns the number and the rest.
fn split_number(s: &str) -> Option<(f64, &str)> {
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - frac_start;
    }
    if digits == 0 {
        return None;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        let exp_start = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_start {
            i = j;
        }
    }
    s[..i].parse::<f64>().ok().map(|v| (v, &s[i..]))
}

pub fn parse_quantity(s: &str) -> Result<Quantity, String> {
    let (value, rest) = split_number(s).ok_or_else(|| format!("expected a number in `{s}`"))?;
    if rest.is_empty() {
        return Err(format!("missing unit in `{s}`"));
    }
    let unit = Unit::from_symbol(rest).ok_or_else(|| format!("unknown unit `{rest}`"))?;
    if !value.is_finite() {
        return Err(format!("value out of range in `{s}`"));
    }
    Ok(Quantity { value, unit })
}

/// `pi`, `-pi`, `pi/2`, `3pi/4`, `0.5pi`, or a quantity in rad/deg.
pub fn parse_angle(s: &str) -> Result<Angle, String> {
    let Some(at) = s.find("pi") else {
        return parse_quantity(s).map(Angle::Quantity);
    };
    let (coef, tail) = (&s[..at], &s[at + 2..]);
    let c = match coef {
        "" | "+" => 1.0,
        "-" => -1.0,
        _ => match split_number(coef) {
            Some((v, "")) => v,
            _ => return Err(format!("bad multiple of pi `{coef}`")),
        },
    };
    let d = if tail.is_empty() {
        1.0
    } else {
        match tail.strip_prefix('/').and_then(split_number) {
            Some((v, "")) if v > 0.0 => v,
            _ => return Err(format!("bad divisor `{tail}`")),
        }
    };
    let m = c / d;
    if !m.is_finite() {
        return Err(format!("angle out of range `{s}`"));
    }
    Ok(Angle::Pi(m))
}

fn parse_state(s: &str) -> Option<[Spin; 2]> {
    let spin = |c: char| match c {
        'd' => Some(Spin::Down),
        'u' => Some(Spin::Up),
        _ => None,
    };
    let mut chars = s.chars();
    let (a, b) = (chars.next()?, chars.next()?);
    if chars.next().is_some() {
        return None;
    }
    Some([spin(a)?, spin(b)?])
}

impl Parser {
    fn pulse(&self, tokens: &[Token<'_>]) -> Result<Pulse, SequenceError> {
        let Some(t) = tokens.get(1) else {
            return Err(self.syntax(tokens[0].column + 5, "pulse needs a target (global, q1, q2)"));
        };
        if t.text.contains('=') {
            return Err(self.syntax(t.column, "pulse needs a target (global, q1, q2) before its arguments"));
        }
        let target = match t.text {
            "global" => Target::Global,
            "q1" => Target::Q1,
            "q2" => Target::Q2,
            other => return Err(self.validation(t.column, format!("unknown target `{other}`"))),
        };
        let mut duration = None;
        let mut angle = None;
        let mut rate = None;
        let mut detuning = None;
        let mut phase = None;
        for tok in &tokens[2..] {
            let Some((key, value)) = tok.text.split_once('=') else {
                return Err(self.syntax(tok.column, format!("expected key=value, got `{}`", tok.text)));
            };
            let vcol = tok.column + key.chars().count() + 1;
            let err = |m: String| self.syntax(vcol, m);
            let dup = |taken: bool| if taken { Err(self.syntax(tok.column, format!("duplicate argument `{key}`"))) } else { Ok(()) };
            match key {
                "duration" => {
                    dup(duration.is_some())?;
                    duration = Some((parse_quantity(value).map_err(err)?, tok.column));
                }
                "angle" => {
                    dup(angle.is_some())?;
                    angle = Some((parse_angle(value).map_err(err)?, tok.column));
                }
                "rate" => {
                    dup(rate.is_some())?;
                    rate = Some(parse_quantity(value).map_err(err)?);
                }
                "detuning" => {
                    dup(detuning.is_some())?;
                    detuning = Some(parse_quantity(value).map_err(err)?);
                }
                "phase" => {
                    dup(phase.is_some())?;
                    phase = Some(parse_angle(value).map_err(err)?);
                }
                _ => return Err(self.syntax(tok.column, format!("unknown pulse argument `{key}`"))),
            }
        }
        let length = match (duration, angle) {
            (Some((d, _)), None) => PulseLength::Duration(d),
            (None, Some((a, _))) => PulseLength::Angle(a),
            (Some(_), Some((_, col))) => {
                return Err(self.validation(col, "give either duration or angle, not both"));
            }
            (None, None) => return Err(self.validation(tokens[0].column, "pulse needs a duration or an angle")),
        };
        Ok(Pulse { target, length, rate, detuning, phase })
    }
}

/// Parses and validates a script.
pub fn parse(text: &str) -> Result<SequenceProgram, SequenceError> {
    let mut program = SequenceProgram::default();
    let mut stack: Vec<Frame> = Vec::new();
    let mut top: Vec<Instruction> = Vec::new();
    let mut validator = Validator::default();
    let mut p = Parser { line: 0 };

    for (idx, raw) in text.lines().enumerate() {
        p.line = idx + 1;
        let tokens = tokenize(raw);
        let Some(head) = tokens.first() else { continue };
        let col = head.column;

        if head.text == "}" {
            p.expect_arity(&tokens, 1)?;
            let frame = stack.pop().ok_or_else(|| p.syntax(col, "unmatched `}`"))?;
            validator.exit_branch(frame.saved).map_err(|m| p.validation(col, m))?;
            stack
                .last_mut()
                .map_or(&mut top, |f| &mut f.instructions)
                .push(Instruction::Branch { bright: frame.bright, body: frame.instructions });
            continue;
        }

        let ins = match head.text {
            "name" | "seed" => {
                if !stack.is_empty() {
                    return Err(p.syntax(col, format!("`{}` is only allowed at top level", head.text)));
                }
                p.expect_arity(&tokens, 2)?;
                let arg = tokens[1];
                if head.text == "name" {
                    if program.name.is_some() {
                        return Err(p.validation(col, "duplicate name"));
                    }
                    if !valid_name(arg.text) {
                        return Err(p.syntax(arg.column, format!("invalid name `{}`", arg.text)));
                    }
                    program.name = Some(arg.text.to_string());
                } else {
                    if program.seed.is_some() {
                        return Err(p.validation(col, "duplicate seed"));
                    }
                    let seed = arg
                        .text
                        .parse::<u64>()
                        .map_err(|_| p.syntax(arg.column, format!("invalid seed `{}`", arg.text)))?;
                    program.seed = Some(seed);
                }
                continue;
            }
            "prepare" => {
                p.expect_arity(&tokens, 2)?;
                let s = parse_state(tokens[1].text).ok_or_else(|| {
                    p.syntax(tokens[1].column, format!("expected dd, du, ud or uu, got `{}`", tokens[1].text))
                })?;
                Instruction::Prepare(s)
            }
            "config" => {
                p.expect_arity(&tokens, 2)?;
                match tokens[1].text {
                    "A" => Instruction::SetConfig(Configuration::A),
                    "B" => Instruction::SetConfig(Configuration::B),
                    other => return Err(p.syntax(tokens[1].column, format!("unknown configuration `{other}`"))),
                }
            }
            "pulse" => Instruction::Pulse(p.pulse(&tokens)?),
            "wait" => {
                p.expect_arity(&tokens, 2)?;
                Instruction::Wait(parse_quantity(tokens[1].text).map_err(|m| p.syntax(tokens[1].column, m))?)
            }
            "detect" => {
                p.expect_arity(&tokens, 1)?;
                Instruction::Detect
            }
            "branch" => {
                p.expect_arity(&tokens, 3)?;
                let arg = tokens[1];
                let bright = arg
                    .text
                    .strip_prefix("bright=")
                    .and_then(|v| v.parse::<u8>().ok())
                    .ok_or_else(|| p.syntax(arg.column, format!("expected bright=N, got `{}`", arg.text)))?;
                if tokens[2].text != "{" {
                    return Err(p.syntax(tokens[2].column, "expected `{`"));
                }
                let ins = Instruction::Branch { bright, body: Vec::new() };
                validator.check(&ins).map_err(|m| p.validation(col, m))?;
                stack.push(Frame { instructions: Vec::new(), bright, line: p.line, column: col, saved: validator.enter_branch() });
                continue;
            }
            other => return Err(p.syntax(col, format!("unknown instruction `{other}`"))),
        };
        validator.check(&ins).map_err(|m| p.validation(col, m))?;
        stack.last_mut().map_or(&mut top, |f| &mut f.instructions).push(ins);
    }

    if let Some(open) = stack.last() {
        return Err(SequenceError::Syntax { line: open.line, column: open.column, message: "unclosed branch".into() });
    }
    program.instructions = top;
    Ok(program)
}
