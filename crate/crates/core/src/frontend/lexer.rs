use super::FrontendError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    /// Duration literal in milliseconds.
    Time(i64),
    Str(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

const SYMBOLS: &[&str] = &[
    ":=", "=>", "<=", ">=", "<>", "..", ":", ";", ",", "(", ")", ".", "=", "<", ">", "+", "-",
    "*", "/", "&", "[", "]",
];

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
    path: &'a str,
}

impl Cursor<'_> {
    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek(i) == Some(c))
    }

    fn error(&self, line: u32, col: u32, message: impl Into<String>) -> FrontendError {
        FrontendError::Syntax {
            path: self.path.to_string(),
            line,
            col,
            message: message.into(),
        }
    }
}

pub fn tokenize(path: &str, text: &str) -> Result<Vec<Token>, FrontendError> {
    let mut cur = Cursor {
        chars: text.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        path,
    };
    let mut out = Vec::new();
    loop {
        skip_trivia(&mut cur)?;
        let (line, col) = (cur.line, cur.col);
        let Some(c) = cur.peek(0) else {
            out.push(Token {
                tok: Tok::Eof,
                line,
                col,
            });
            return Ok(out);
        };
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let word = take_while(&mut cur, |c| c.is_ascii_alphanumeric() || c == '_');
            if cur.peek(0) == Some('#') && matches!(word.to_ascii_uppercase().as_str(), "T" | "TIME")
            {
                cur.bump();
                Tok::Time(lex_duration(&mut cur, line, col)?)
            } else {
                Tok::Ident(word)
            }
        } else if c.is_ascii_digit() {
            lex_number(&mut cur, line, col)?
        } else if c == '\'' {
            lex_string(&mut cur, line, col)?
        } else if let Some(sym) = SYMBOLS.iter().find(|s| cur.starts_with(s)) {
            for _ in 0..sym.len() {
                cur.bump();
            }
            Tok::Sym(sym)
        } else {
            return Err(cur.error(line, col, format!("unexpected character '{c}'")));
        };
        out.push(Token { tok, line, col });
    }
}

fn take_while(cur: &mut Cursor<'_>, pred: impl Fn(char) -> bool) -> String {
    let mut s = String::new();
    while let Some(c) = cur.peek(0) {
        if !pred(c) {
            break;
        }
        s.push(c);
        cur.bump();
    }
    s
}

fn skip_trivia(cur: &mut Cursor<'_>) -> Result<(), FrontendError> {
    loop {
        match cur.peek(0) {
            Some(c) if c.is_whitespace() => {
                cur.bump();
            }
            Some('(') if cur.peek(1) == Some('*') => {
                let (line, col) = (cur.line, cur.col);
                cur.bump();
                cur.bump();
                loop {
                    if cur.starts_with("*)") {
                        cur.bump();
                        cur.bump();
                        break;
                    }
                    if cur.bump().is_none() {
                        return Err(cur.error(line, col, "unterminated comment"));
                    }
                }
            }
            Some('/') if cur.peek(1) == Some('/') => {
                while let Some(c) = cur.peek(0) {
                    if c == '\n' {
                        break;
                    }
                    cur.bump();
                }
            }
            _ => return Ok(()),
        }
    }
}

fn lex_number(cur: &mut Cursor<'_>, line: u32, col: u32) -> Result<Tok, FrontendError> {
    let mut text = take_while(cur, |c| c.is_ascii_digit() || c == '_');
    let mut is_real = false;
    // `1..5` is a range, not a real literal.
    if cur.peek(0) == Some('.') && cur.peek(1).is_some_and(|c| c.is_ascii_digit()) {
        is_real = true;
        cur.bump();
        text.push('.');
        text.push_str(&take_while(cur, |c| c.is_ascii_digit() || c == '_'));
    }
    if matches!(cur.peek(0), Some('e' | 'E'))
        && (cur.peek(1).is_some_and(|c| c.is_ascii_digit())
            || (matches!(cur.peek(1), Some('+' | '-'))
                && cur.peek(2).is_some_and(|c| c.is_ascii_digit())))
    {
        is_real = true;
        text.push('e');
        cur.bump();
        if let Some(sign @ ('+' | '-')) = cur.peek(0) {
            text.push(sign);
            cur.bump();
        }
        text.push_str(&take_while(cur, |c| c.is_ascii_digit()));
    }
    let clean: String = text.chars().filter(|&c| c != '_').collect();
    if is_real {
        clean
            .parse::<f64>()
            .map(Tok::Real)
            .map_err(|_| cur.error(line, col, format!("invalid real literal '{text}'")))
    } else {
        clean
            .parse::<i64>()
            .map(Tok::Int)
            .map_err(|_| cur.error(line, col, format!("integer literal '{text}' out of range")))
    }
}

fn lex_duration(cur: &mut Cursor<'_>, line: u32, col: u32) -> Result<i64, FrontendError> {
    let mut total: i64 = 0;
    let mut parts = 0;
    while cur.peek(0).is_some_and(|c| c.is_ascii_digit()) {
        let digits = take_while(cur, |c| c.is_ascii_digit() || c == '_');
        let value: i64 = digits
            .replace('_', "")
            .parse()
            .map_err(|_| cur.error(line, col, "duration component out of range"))?;
        let unit = take_while(cur, |c| c.is_ascii_alphabetic()).to_ascii_lowercase();
        let scale = match unit.as_str() {
            "d" => 86_400_000,
            "h" => 3_600_000,
            "m" => 60_000,
            "s" => 1_000,
            "ms" => 1,
            _ => return Err(cur.error(line, col, format!("invalid duration unit '{unit}'"))),
        };
        total = value
            .checked_mul(scale)
            .and_then(|v| total.checked_add(v))
            .ok_or_else(|| cur.error(line, col, "duration literal out of range"))?;
        parts += 1;
        if cur.peek(0) == Some('_') {
            cur.bump();
        }
    }
    if parts == 0 {
        return Err(cur.error(line, col, "empty duration literal"));
    }
    Ok(total)
}

fn lex_string(cur: &mut Cursor<'_>, line: u32, col: u32) -> Result<Tok, FrontendError> {
    cur.bump();
    let mut s = String::new();
    loop {
        match cur.bump() {
            None | Some('\n') => return Err(cur.error(line, col, "unterminated string literal")),
            Some('\'') => return Ok(Tok::Str(s)),
            Some('$') => match cur.bump() {
                Some('\'') => s.push('\''),
                Some('$') => s.push('$'),
                Some('N' | 'n') => s.push('\n'),
                Some('T' | 't') => s.push('\t'),
                Some(other) => {
                    return Err(cur.error(line, col, format!("unknown string escape '${other}'")))
                }
                None => return Err(cur.error(line, col, "unterminated string literal")),
            },
            Some(c) => s.push(c),
        }
    }
}

/// Renders a string literal with the escapes `tokenize` understands.
pub fn quote_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\'' => out.push_str("$'"),
            '$' => out.push_str("$$"),
            '\n' => out.push_str("$N"),
            '\t' => out.push_str("$T"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize("t.st", s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn lexes_time_literals() {
        assert_eq!(toks("T#1s500ms")[0], Tok::Time(1500));
        assert_eq!(toks("TIME#2m")[0], Tok::Time(120_000));
        assert_eq!(toks("t#10ms")[0], Tok::Time(10));
    }

    #[test]
    fn range_is_not_real() {
        assert_eq!(
            toks("1..5"),
            vec![Tok::Int(1), Tok::Sym(".."), Tok::Int(5), Tok::Eof]
        );
        assert_eq!(toks("1.5e3")[0], Tok::Real(1500.0));
    }

    #[test]
    fn comments_and_positions() {
        let t = tokenize("t.st", "(* a\n b *) x // y\n  z").unwrap();
        assert_eq!(t[0].tok, Tok::Ident("x".into()));
        assert_eq!((t[0].line, t[0].col), (2, 7));
        assert_eq!((t[1].line, t[1].col), (3, 3));
    }

    #[test]
    fn string_escapes_round_trip() {
        let s = "it's $5\n";
        assert_eq!(toks(&quote_string(s))[0], Tok::Str(s.into()));
    }

    #[test]
    fn unterminated_comment_is_an_error() {
        let err = tokenize("t.st", "x (* never closed").unwrap_err();
        assert!(err.to_string().contains("unterminated comment"));
    }
}
