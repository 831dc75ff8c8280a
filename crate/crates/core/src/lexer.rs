//! Hand-rolled lexer for `.lt` source files.

use crate::ast::Comment;
use crate::loc::SourceLoc;
use std::sync::Arc;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TokenKind {
    Ident,
    Int,
    // keywords
    KwFn,
    KwLet,
    KwGlobal,
    KwConst,
    KwIf,
    KwElse,
    KwWhile,
    KwReturn,
    KwCreate,
    KwDestroy,
    KwAllocate,
    KwDeallocate,
    KwNew,
    KwDelete,
    KwMove,
    KwPre,
    KwPost,
    KwNull,
    KwOwner,
    KwPointer,
    KwValue,
    // punctuation
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Arrow,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Amp,
    PlusPlus,
    MinusMinus,
    PlusEq,
    MinusEq,
    Eof,
    /// Anything the lexer cannot classify; the parser reports it.
    Unknown,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub loc: SourceLoc,
}

fn keyword(text: &str) -> Option<TokenKind> {
    Some(match text {
        "fn" => TokenKind::KwFn,
        "let" => TokenKind::KwLet,
        "global" => TokenKind::KwGlobal,
        "const" => TokenKind::KwConst,
        "if" => TokenKind::KwIf,
        "else" => TokenKind::KwElse,
        "while" => TokenKind::KwWhile,
        "return" => TokenKind::KwReturn,
        "create" => TokenKind::KwCreate,
        "destroy" => TokenKind::KwDestroy,
        "allocate" => TokenKind::KwAllocate,
        "deallocate" => TokenKind::KwDeallocate,
        "new" => TokenKind::KwNew,
        "delete" => TokenKind::KwDelete,
        "move" => TokenKind::KwMove,
        "pre" => TokenKind::KwPre,
        "post" => TokenKind::KwPost,
        "null" => TokenKind::KwNull,
        "Owner" => TokenKind::KwOwner,
        "Pointer" => TokenKind::KwPointer,
        "Value" => TokenKind::KwValue,
        _ => return None,
    })
}

/// Tokenizes `source`, returning the token stream (terminated by `Eof`)
/// and the line comments encountered along the way.
pub fn tokenize(source: &str, file: &Arc<str>) -> (Vec<Token>, Vec<Comment>) {
    let mut tokens = Vec::new();
    let mut comments = Vec::new();
    let chars: Vec<char> = source.chars().collect();
    let mut i = 0;
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! push {
        ($kind:expr, $text:expr, $l:expr, $c:expr) => {
            tokens.push(Token {
                kind: $kind,
                text: $text,
                loc: SourceLoc::new(file, $l, $c),
            })
        };
    }

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '/' if i + 1 < chars.len() && chars[i + 1] == '/' => {
                let start = i + 2;
                let mut end = start;
                while end < chars.len() && chars[end] != '\n' {
                    end += 1;
                }
                comments.push(Comment {
                    line,
                    text: chars[start..end].iter().collect::<String>().trim().to_string(),
                });
                col += (end - i) as u32;
                i = end;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                    col += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let kind = keyword(&text).unwrap_or(TokenKind::Ident);
                push!(kind, text, tl, tc);
            }
            _ if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                    col += 1;
                }
                let text: String = chars[start..i].iter().collect();
                push!(TokenKind::Int, text, tl, tc);
            }
            _ => {
                let two: Option<TokenKind> = if i + 1 < chars.len() {
                    match (c, chars[i + 1]) {
                        ('-', '>') => Some(TokenKind::Arrow),
                        ('=', '=') => Some(TokenKind::EqEq),
                        ('!', '=') => Some(TokenKind::NotEq),
                        ('<', '=') => Some(TokenKind::Le),
                        ('>', '=') => Some(TokenKind::Ge),
                        ('+', '+') => Some(TokenKind::PlusPlus),
                        ('-', '-') => Some(TokenKind::MinusMinus),
                        ('+', '=') => Some(TokenKind::PlusEq),
                        ('-', '=') => Some(TokenKind::MinusEq),
                        _ => None,
                    }
                } else {
                    None
                };
                if let Some(kind) = two {
                    push!(kind, chars[i..i + 2].iter().collect(), tl, tc);
                    i += 2;
                    col += 2;
                    continue;
                }
                let kind = match c {
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    '{' => TokenKind::LBrace,
                    '}' => TokenKind::RBrace,
                    '[' => TokenKind::LBracket,
                    ']' => TokenKind::RBracket,
                    ',' => TokenKind::Comma,
                    ';' => TokenKind::Semi,
                    ':' => TokenKind::Colon,
                    '=' => TokenKind::Assign,
                    '<' => TokenKind::Lt,
                    '>' => TokenKind::Gt,
                    '+' => TokenKind::Plus,
                    '-' => TokenKind::Minus,
                    '*' => TokenKind::Star,
                    '/' => TokenKind::Slash,
                    '&' => TokenKind::Amp,
                    _ => TokenKind::Unknown,
                };
                push!(kind, c.to_string(), tl, tc);
                i += 1;
                col += 1;
            }
        }
    }
    push!(TokenKind::Eof, String::new(), line, col);
    (tokens, comments)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file() -> Arc<str> {
        Arc::from("test.lt")
    }

    #[test]
    fn lexes_keywords_and_punctuation() {
        let (toks, _) = tokenize("fn f() -> Pointer { p += 1; }", &file());
        let kinds: Vec<TokenKind> = toks.iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            vec![
                TokenKind::KwFn,
                TokenKind::Ident,
                TokenKind::LParen,
                TokenKind::RParen,
                TokenKind::Arrow,
                TokenKind::KwPointer,
                TokenKind::LBrace,
                TokenKind::Ident,
                TokenKind::PlusEq,
                TokenKind::Int,
                TokenKind::Semi,
                TokenKind::RBrace,
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn records_comments_with_lines() {
        let src = "// expect-error@+1: E001\nfn main() {}\n";
        let (_, comments) = tokenize(src, &file());
        assert_eq!(comments.len(), 1);
        assert_eq!(comments[0].line, 1);
        assert_eq!(comments[0].text, "expect-error@+1: E001");
    }

    #[test]
    fn tracks_positions() {
        let (toks, _) = tokenize("a\n  bb", &file());
        assert_eq!((toks[0].loc.line, toks[0].loc.column), (1, 1));
        assert_eq!((toks[1].loc.line, toks[1].loc.column), (2, 3));
    }
}
