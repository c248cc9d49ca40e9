//! Recursive-descent parser for the block-call grammar.
//!
//! ```text
//! source    := statement (SEP statement)*          SEP = '\n' | ';'
//! statement := [ call [ '@' 'P' INT ] ] [ '#' comment ]
//! call      := NAME '(' INT (',' INT)* ')'
//! ```
//!
//! Blanks (space, tab, CR) are allowed between any two tokens. A leading
//! `Input(channels,resolution)` statement overrides the default input geometry.

use std::fmt;
use std::iter::Peekable;
use std::str::Chars;

use super::{catalog_signature, ArchitectureSpec, BlockKind, BlockSpec, Mode};

const INPUT_DIRECTIVE: &str = "Input";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedEnd,
    UnknownBlock(String),
    WrongArity { name: String, expected: usize, found: usize },
    NonInteger(String),
    MisplacedDirective,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: ", self.line, self.column)?;
        match &self.kind {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            ParseErrorKind::UnexpectedEnd => write!(f, "unexpected end of input"),
            ParseErrorKind::UnknownBlock(name) => write!(f, "unknown block `{name}`"),
            ParseErrorKind::WrongArity { name, expected, found } => {
                write!(f, "wrong arity for `{name}`: expected {expected} arguments, found {found}")
            }
            ParseErrorKind::NonInteger(text) => write!(f, "non-integer argument `{text}`"),
            ParseErrorKind::MisplacedDirective => {
                write!(f, "`Input` must appear once, before the first block")
            }
            ParseErrorKind::Empty => write!(f, "no blocks"),
        }
    }
}

struct Cursor<'a> {
    chars: Peekable<Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self { chars: text.chars().peekable(), line: 1, column: 1 }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, kind: ParseErrorKind) -> ParseError {
        ParseError { line: self.line, column: self.column, kind }
    }

    fn skip_blanks(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t' | '\r')) {
            self.bump();
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        self.skip_blanks();
        match self.peek() {
            Some(c) if c == want => {
                self.bump();
                Ok(())
            }
            Some(c) => Err(self.error(ParseErrorKind::UnexpectedChar(c))),
            None => Err(self.error(ParseErrorKind::UnexpectedEnd)),
        }
    }

    fn identifier(&mut self) -> String {
        let mut name = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                name.push(c);
                self.bump();
            } else {
                break;
            }
        }
        name
    }

    fn integer(&mut self) -> Result<usize, ParseError> {
        self.skip_blanks();
        let (line, column) = (self.line, self.column);
        let mut text = String::new();
        while let Some(c) = self.peek() {
            if matches!(c, ',' | ')' | ';' | '\n' | '#' | ' ' | '\t' | '\r') {
                break;
            }
            text.push(c);
            self.bump();
        }
        if text.is_empty() {
            return match self.peek() {
                Some(c) => Err(self.error(ParseErrorKind::UnexpectedChar(c))),
                None => Err(self.error(ParseErrorKind::UnexpectedEnd)),
            };
        }
        if !text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseError { line, column, kind: ParseErrorKind::NonInteger(text) });
        }
        text.parse::<usize>()
            .map_err(|_| ParseError { line, column, kind: ParseErrorKind::NonInteger(text) })
    }

    /// Parses `'(' INT (',' INT)* ')'`, returning the arguments.
    fn arguments(&mut self) -> Result<Vec<usize>, ParseError> {
        self.expect('(')?;
        let mut args = vec![self.integer()?];
        loop {
            self.skip_blanks();
            match self.peek() {
                Some(',') => {
                    self.bump();
                    args.push(self.integer()?);
                }
                Some(')') => {
                    self.bump();
                    return Ok(args);
                }
                Some(c) => return Err(self.error(ParseErrorKind::UnexpectedChar(c))),
                None => return Err(self.error(ParseErrorKind::UnexpectedEnd)),
            }
        }
    }
}

enum Statement {
    Block(BlockSpec),
    Input { channels: usize, resolution: usize },
}

fn statement(cur: &mut Cursor<'_>) -> Result<Option<Statement>, ParseError> {
    cur.skip_blanks();
    match cur.peek() {
        None | Some('\n' | ';' | '#') => return Ok(None),
        Some(c) if !c.is_ascii_alphabetic() => {
            return Err(cur.error(ParseErrorKind::UnexpectedChar(c)))
        }
        Some(_) => {}
    }
    let (line, column) = (cur.line, cur.column);
    let name = cur.identifier();
    let at = |kind| ParseError { line, column, kind };

    if name == INPUT_DIRECTIVE {
        let args = cur.arguments()?;
        if args.len() != 2 {
            return Err(at(ParseErrorKind::WrongArity { name, expected: 2, found: args.len() }));
        }
        return Ok(Some(Statement::Input { channels: args[0], resolution: args[1] }));
    }

    let kind = BlockKind::from_name(&name).ok_or_else(|| at(ParseErrorKind::UnknownBlock(name.clone())))?;
    let args = cur.arguments()?;
    let arity = catalog_signature(kind).arity;
    if args.len() != arity {
        return Err(at(ParseErrorKind::WrongArity { name, expected: arity, found: args.len() }));
    }
    let mut block = BlockSpec::new(kind, args[0], args[1], args[2], args[3]);

    cur.skip_blanks();
    if cur.peek() == Some('@') {
        cur.bump();
        cur.expect('P')?;
        let scale = cur.integer()?;
        let scale = u32::try_from(scale).map_err(|_| {
            cur.error(ParseErrorKind::NonInteger(scale.to_string()))
        })?;
        block.tap = Some(scale);
    }
    Ok(Some(Statement::Block(block)))
}

/// Parses DSL source into an (unvalidated) architecture for `mode`.
pub fn parse_architecture(text: &str, mode: Mode) -> Result<ArchitectureSpec, ParseError> {
    let mut cur = Cursor::new(text);
    let mut blocks = Vec::new();
    let mut input: Option<(usize, usize)> = None;

    loop {
        let (line, column) = (cur.line, cur.column);
        match statement(&mut cur)? {
            Some(Statement::Block(b)) => blocks.push(b),
            Some(Statement::Input { channels, resolution }) => {
                if input.is_some() || !blocks.is_empty() {
                    return Err(ParseError { line, column, kind: ParseErrorKind::MisplacedDirective });
                }
                input = Some((channels, resolution));
            }
            None => {}
        }
        cur.skip_blanks();
        if cur.peek() == Some('#') {
            while !matches!(cur.peek(), None | Some('\n')) {
                cur.bump();
            }
        }
        match cur.peek() {
            None => break,
            Some('\n' | ';') => {
                cur.bump();
            }
            Some(c) => return Err(cur.error(ParseErrorKind::UnexpectedChar(c))),
        }
    }

    if blocks.is_empty() {
        return Err(cur.error(ParseErrorKind::Empty));
    }
    let mut arch = ArchitectureSpec::new(mode, blocks);
    if let Some((channels, resolution)) = input {
        arch.input_channels = channels;
        arch.input_resolution = resolution;
    }
    Ok(arch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(text: &str) -> BlockSpec {
        let arch = parse_architecture(text, Mode::Classification).unwrap();
        assert_eq!(arch.blocks.len(), 1);
        arch.blocks[0].clone()
    }

    #[test]
    fn conv_block_call() {
        assert_eq!(single("ConvK3BNRELU(3,8,1,1)"), BlockSpec::new(BlockKind::ConvK3BNRELU, 3, 8, 1, 1));
    }

    #[test]
    fn residual_block_call() {
        assert_eq!(single("ResK3K3(16,32,2,1)"), BlockSpec::new(BlockKind::ResK3K3, 16, 32, 2, 1));
    }

    #[test]
    fn wrong_arity_reports_line() {
        let err = parse_architecture("ConvK3BNRELU(3,8,1)", Mode::Classification).unwrap_err();
        assert_eq!(err.line, 1);
        assert!(matches!(err.kind, ParseErrorKind::WrongArity { expected: 4, found: 3, .. }));
    }

    #[test]
    fn whitespace_comments_and_separators() {
        let text = "  ConvK3BNRELU ( 3 , 8 , 1 , 1 )  # stem\r\n\n ResK3K3(8,16,2,1); GAP(16,16,1,1);FC(16,10,1,1)\n";
        let arch = parse_architecture(text, Mode::Classification).unwrap();
        assert_eq!(arch.blocks.len(), 4);
        assert_eq!(arch.blocks[1], BlockSpec::new(BlockKind::ResK3K3, 8, 16, 2, 1));
        assert_eq!(arch.num_classes, Some(10));
    }

    #[test]
    fn tap_suffix() {
        let arch = parse_architecture("SCDown(3,16,2,1) @ P3", Mode::Detection).unwrap();
        assert_eq!(arch.blocks[0].tap, Some(3));
    }

    #[test]
    fn unknown_block_position() {
        let err = parse_architecture("ConvK3BNRELU(3,8,1,1)\n  Conv9(8,8,1,1)", Mode::Classification).unwrap_err();
        assert_eq!((err.line, err.column), (2, 3));
        assert_eq!(err.kind, ParseErrorKind::UnknownBlock("Conv9".into()));
    }

    #[test]
    fn non_integer_arguments() {
        for text in ["GAP(1.5,2,1,1)", "GAP(-1,2,1,1)", "GAP(a,2,1,1)", "GAP(99999999999999999999999,1,1,1)"] {
            let err = parse_architecture(text, Mode::Classification).unwrap_err();
            assert!(matches!(err.kind, ParseErrorKind::NonInteger(_)), "{text}: {err}");
            assert_eq!(err.column, 5);
        }
    }

    #[test]
    fn rejects_trailing_garbage_and_empty_input() {
        assert!(parse_architecture("GAP(8,8,1,1) x", Mode::Classification).is_err());
        assert!(parse_architecture("GAP(8,8,1,1", Mode::Classification).is_err());
        assert_eq!(
            parse_architecture("  # nothing\n", Mode::Classification).unwrap_err().kind,
            ParseErrorKind::Empty
        );
    }

    #[test]
    fn input_directive_must_lead() {
        let err = parse_architecture("GAP(8,8,1,1)\nInput(3,16)", Mode::Classification).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::MisplacedDirective);
        let arch = parse_architecture("Input(1,28)\nConvK1BNRELU(1,4,1,1)", Mode::Detection).unwrap();
        assert_eq!((arch.input_channels, arch.input_resolution), (1, 28));
    }
}
