//! Lexical structural index over Java sources.
//!
//! The scanner understands comments, string/char literals, text blocks and
//! brace depth. It recognizes type and method headers from the tokens that
//! precede an opening brace, which is all the metamorphic operators need to
//! find legal insertion points.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::SourceSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScanError {
    #[error("{file}:{line}: unbalanced braces")]
    UnbalancedBraces { file: String, line: usize },
    #[error("{file}:{line}: unterminated literal or comment")]
    UnterminatedLiteral { file: String, line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TokenKind {
    Ident,
    Literal,
    Punct(char),
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeKind {
    Class,
    Interface,
    Enum,
    Record,
    Annotation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeSpan {
    pub name: String,
    pub kind: TypeKind,
    /// Offset of the first header token (modifiers and annotations included).
    pub header_start: usize,
    pub open_brace: usize,
    pub close_brace: usize,
    pub top_level: bool,
    pub is_public: bool,
}

/// A place where a declaration or statement can be spliced in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionPoint {
    /// Byte offset at which inserted text goes.
    pub offset: usize,
    /// True when `offset` is the start of a line (whole-line insertion).
    pub line_start: bool,
    /// Indentation to use for whole-line insertions.
    pub indent: String,
    /// Enclosing type (member points) or method (body points).
    pub owner: String,
    /// Kind of the enclosing type.
    pub owner_kind: TypeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileIndex {
    pub path: String,
    pub types: Vec<TypeSpan>,
    pub member_points: Vec<InsertionPoint>,
    pub body_points: Vec<InsertionPoint>,
    pub import_point: InsertionPoint,
    pub imports: Vec<String>,
    pub package: Option<String>,
    pub identifiers: BTreeSet<String>,
    /// Line-start offsets where a whole line may be inserted without landing
    /// inside a block comment or text block. Includes the end of file.
    pub line_boundaries: Vec<usize>,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralIndex {
    pub files: Vec<FileIndex>,
    /// Union of identifiers over all files, plus any names reserved since.
    pub identifiers: BTreeSet<String>,
}

impl StructuralIndex {
    pub fn top_level_types(&self) -> impl Iterator<Item = &TypeSpan> {
        self.files.iter().flat_map(|f| f.types.iter().filter(|t| t.top_level))
    }
}

/// Builds the structural index of every file in `src`.
pub fn index_structure(src: &SourceSet) -> Result<StructuralIndex, ScanError> {
    let mut files = Vec::with_capacity(src.files().len());
    let mut identifiers = BTreeSet::new();
    for file in src.files() {
        let fi = index_file(&file.path, &file.content)?;
        identifiers.extend(fi.identifiers.iter().cloned());
        files.push(fi);
    }
    Ok(StructuralIndex { files, identifiers })
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

pub(crate) struct Lexed {
    pub tokens: Vec<Token>,
    /// Byte ranges of block comments and text blocks (may span lines).
    pub multiline: Vec<(usize, usize)>,
    /// Byte ranges of all comments.
    pub comments: Vec<(usize, usize)>,
}

pub(crate) fn lex(path: &str, text: &str) -> Result<Lexed, ScanError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut multiline = Vec::new();
    let mut comments = Vec::new();
    let unterminated = |at: usize| ScanError::UnterminatedLiteral {
        file: path.to_string(),
        line: line_of(text, at),
    };
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                let end = text[i..].find('\n').map_or(bytes.len(), |p| i + p);
                comments.push((i, end));
                i = end;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let end = text[i + 2..]
                    .find("*/")
                    .map(|p| i + 2 + p + 2)
                    .ok_or_else(|| unterminated(i))?;
                comments.push((i, end));
                multiline.push((i, end));
                i = end;
            }
            b'"' if text[i..].starts_with("\"\"\"") => {
                let mut j = i + 3;
                loop {
                    match bytes.get(j) {
                        None => return Err(unterminated(i)),
                        Some(b'\\') => j += 2,
                        Some(b'"') if text[j..].starts_with("\"\"\"") => {
                            j += 3;
                            break;
                        }
                        Some(_) => j += 1,
                    }
                }
                multiline.push((i, j));
                tokens.push(Token { kind: TokenKind::Literal, start: i, end: j });
                i = j;
            }
            b'"' | b'\'' => {
                let quote = b;
                let mut j = i + 1;
                loop {
                    match bytes.get(j) {
                        None | Some(b'\n') => return Err(unterminated(i)),
                        Some(b'\\') => j += 2,
                        Some(c) if *c == quote => {
                            j += 1;
                            break;
                        }
                        Some(_) => j += 1,
                    }
                }
                tokens.push(Token { kind: TokenKind::Literal, start: i, end: j });
                i = j;
            }
            c if c.is_ascii_whitespace() => i += 1,
            c if c.is_ascii_digit() => {
                let mut j = i + 1;
                while j < bytes.len()
                    && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_' || bytes[j] == b'.')
                {
                    j += 1;
                }
                tokens.push(Token { kind: TokenKind::Literal, start: i, end: j });
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == b'_' || c == b'$' || c >= 0x80 => {
                let mut j = i;
                for (off, ch) in text[i..].char_indices() {
                    if ch.is_alphanumeric() || ch == '_' || ch == '$' {
                        j = i + off + ch.len_utf8();
                    } else {
                        break;
                    }
                }
                if j == i {
                    // Non-identifier multibyte char; skip it whole.
                    let ch = text[i..].chars().next().map_or(1, char::len_utf8);
                    i += ch;
                    continue;
                }
                tokens.push(Token { kind: TokenKind::Ident, start: i, end: j });
                i = j;
            }
            c => {
                tokens.push(Token { kind: TokenKind::Punct(c as char), start: i, end: i + 1 });
                i += 1;
            }
        }
    }
    Ok(Lexed { tokens, multiline, comments })
}

#[derive(Debug)]
enum Frame {
    Type { span_idx: usize, name: String, kind: TypeKind },
    Method,
    Other,
}

fn is_punct(t: &Token, c: char) -> bool {
    t.kind == TokenKind::Punct(c)
}

/// Removes annotations (`@Name`, `@a.b.Name(...)`) from a header.
fn strip_annotations<'a>(header: &[&'a Token], text: &str) -> Vec<&'a Token> {
    let mut out = Vec::with_capacity(header.len());
    let mut i = 0;
    while i < header.len() {
        let t = header[i];
        let next_is_interface = header
            .get(i + 1)
            .is_some_and(|n| &text[n.start..n.end] == "interface");
        if is_punct(t, '@') && !next_is_interface {
            i += 1;
            // qualified name
            while i < header.len() {
                if header[i].kind == TokenKind::Ident {
                    i += 1;
                    if i < header.len() && is_punct(header[i], '.') {
                        i += 1;
                        continue;
                    }
                }
                break;
            }
            if i < header.len() && is_punct(header[i], '(') {
                let mut depth = 0i32;
                while i < header.len() {
                    if is_punct(header[i], '(') {
                        depth += 1;
                    } else if is_punct(header[i], ')') {
                        depth -= 1;
                        if depth == 0 {
                            i += 1;
                            break;
                        }
                    }
                    i += 1;
                }
            }
            continue;
        }
        out.push(t);
        i += 1;
    }
    out
}

enum HeaderKind {
    Type { name: String, kind: TypeKind, is_public: bool },
    Method { name: String },
    Other,
}

fn classify_header(header: &[&Token], text: &str, enclosing: Option<(&str, TypeKind)>) -> HeaderKind {
    let word = |t: &Token| &text[t.start..t.end];
    let toks = strip_annotations(header, text);
    if toks.iter().any(|t| t.kind == TokenKind::Ident && word(t) == "new") {
        return HeaderKind::Other;
    }
    for (i, t) in toks.iter().enumerate() {
        if t.kind != TokenKind::Ident {
            continue;
        }
        let after_dot = i > 0 && is_punct(toks[i - 1], '.');
        let kind = match word(t) {
            "class" if !after_dot => TypeKind::Class,
            "interface" if i > 0 && is_punct(toks[i - 1], '@') => TypeKind::Annotation,
            "interface" => TypeKind::Interface,
            "enum" => TypeKind::Enum,
            "record" => {
                let named = toks.get(i + 1).is_some_and(|n| n.kind == TokenKind::Ident);
                let opens = toks
                    .get(i + 2)
                    .is_some_and(|n| is_punct(n, '(') || is_punct(n, '<'));
                if named && opens {
                    TypeKind::Record
                } else {
                    continue;
                }
            }
            _ => continue,
        };
        let Some(name_tok) = toks.get(i + 1).filter(|n| n.kind == TokenKind::Ident) else {
            return HeaderKind::Other;
        };
        let is_public = toks[..i].iter().any(|m| word(m) == "public");
        return HeaderKind::Type { name: word(name_tok).to_string(), kind, is_public };
    }

    let Some((owner, _)) = enclosing else {
        return HeaderKind::Other;
    };
    let Some(paren) = toks.iter().position(|t| is_punct(t, '(')) else {
        return HeaderKind::Other;
    };
    if toks[..paren].iter().any(|t| is_punct(t, '=')) || paren < 2 {
        return HeaderKind::Other;
    }
    let name_tok = toks[paren - 1];
    if name_tok.kind != TokenKind::Ident {
        return HeaderKind::Other;
    }
    let name = word(name_tok);
    // `Owner(...)` preceded only by modifiers is a constructor.
    if name == owner {
        return HeaderKind::Other;
    }
    HeaderKind::Method { name: name.to_string() }
}

fn indent_of_line(text: &str, offset: usize) -> &str {
    let start = text[..offset].rfind('\n').map_or(0, |p| p + 1);
    let line = &text[start..];
    let width = line.len() - line.trim_start_matches([' ', '\t']).len();
    &line[..width]
}

/// Insertion point right after the byte at `after` (exclusive end offset).
/// When the rest of that line is blank, the point moves to the next line start.
fn point_after(
    text: &str,
    after: usize,
    anchor_line: usize,
    extra_indent: bool,
    owner: &str,
    owner_kind: TypeKind,
) -> InsertionPoint {
    let rest = &text[after..];
    let line_end = rest.find('\n');
    let rest_of_line = &rest[..line_end.unwrap_or(rest.len())];
    let base_indent = indent_of_line(text, anchor_line);
    let indent = if extra_indent {
        format!("{base_indent}  ")
    } else {
        base_indent.to_string()
    };
    match line_end {
        Some(nl) if rest_of_line.trim().is_empty() => {
            let offset = after + nl + 1;
            // Prefer the indentation of the following line when it is deeper.
            let next = indent_of_line(text, offset.min(text.len()));
            let indent = if next.len() > base_indent.len() {
                next.to_string()
            } else {
                indent
            };
            InsertionPoint { offset, line_start: true, indent, owner: owner.into(), owner_kind }
        }
        _ => InsertionPoint {
            offset: after,
            line_start: false,
            indent,
            owner: owner.into(),
            owner_kind,
        },
    }
}

pub(crate) fn index_file(path: &str, text: &str) -> Result<FileIndex, ScanError> {
    let lexed = lex(path, text)?;
    let tokens = &lexed.tokens;
    let word = |t: &Token| &text[t.start..t.end];

    let identifiers: BTreeSet<String> = tokens
        .iter()
        .filter(|t| t.kind == TokenKind::Ident)
        .map(|t| word(t).to_string())
        .collect();

    let mut types: Vec<TypeSpan> = Vec::new();
    let mut member_points = Vec::new();
    let mut body_points = Vec::new();
    let mut stack: Vec<Frame> = Vec::new();
    let mut header: Vec<&Token> = Vec::new();
    let mut paren_depth = 0i32;
    let mut imports = Vec::new();
    let mut package_end: Option<usize> = None;
    let mut package = None;

    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        match t.kind {
            TokenKind::Punct('(') => {
                paren_depth += 1;
                header.push(t);
            }
            TokenKind::Punct(')') => {
                paren_depth -= 1;
                header.push(t);
            }
            TokenKind::Punct(';') if paren_depth == 0 => {
                if stack.is_empty() {
                    let words: Vec<&str> = header.iter().map(|h| word(h)).collect();
                    match words.first() {
                        Some(&"package") if package_end.is_none() => {
                            package_end = Some(t.end);
                            package = Some(words[1..].concat());
                        }
                        Some(&"import") => imports.push(words[1..].concat()),
                        _ => {}
                    }
                }
                header.clear();
            }
            TokenKind::Punct('{') => {
                let enclosing = stack.iter().rev().find_map(|f| match f {
                    Frame::Type { name, kind, .. } => Some((name.as_str(), *kind)),
                    _ => None,
                });
                let direct_in_type = matches!(stack.last(), Some(Frame::Type { .. }));
                let frame = if paren_depth != 0 {
                    Frame::Other
                } else {
                    let class_ctx = if direct_in_type { enclosing } else { None };
                    match classify_header(&header, text, class_ctx) {
                        HeaderKind::Type { name, kind, is_public } => {
                            let header_start = header.first().map_or(t.start, |h| h.start);
                            types.push(TypeSpan {
                                name: name.clone(),
                                kind,
                                header_start,
                                open_brace: t.start,
                                close_brace: t.start,
                                top_level: stack.is_empty(),
                                is_public,
                            });
                            if matches!(kind, TypeKind::Class | TypeKind::Interface) {
                                member_points.push(point_after(text, t.end, t.start, true, &name, kind));
                            }
                            Frame::Type { span_idx: types.len() - 1, name, kind }
                        }
                        HeaderKind::Method { name } => {
                            let owner_kind = enclosing.map_or(TypeKind::Class, |e| e.1);
                            body_points.push(point_after(text, t.end, t.start, true, &name, owner_kind));
                            Frame::Method
                        }
                        HeaderKind::Other => Frame::Other,
                    }
                };
                stack.push(frame);
                header.clear();
            }
            TokenKind::Punct('}') => {
                match stack.pop() {
                    Some(Frame::Type { span_idx, .. }) => types[span_idx].close_brace = t.start,
                    Some(_) => {}
                    None => {
                        return Err(ScanError::UnbalancedBraces {
                            file: path.to_string(),
                            line: line_of(text, t.start),
                        })
                    }
                }
                header.clear();
            }
            _ => header.push(t),
        }
        i += 1;
    }
    if !stack.is_empty() {
        return Err(ScanError::UnbalancedBraces {
            file: path.to_string(),
            line: line_of(text, text.len()),
        });
    }

    let import_point = match package_end {
        Some(end) => point_after(text, end, end.saturating_sub(1), false, "", TypeKind::Class),
        None => InsertionPoint {
            offset: 0,
            line_start: true,
            indent: String::new(),
            owner: String::new(),
            owner_kind: TypeKind::Class,
        },
    };

    let mut line_boundaries = vec![0];
    line_boundaries.extend(text.match_indices('\n').map(|(p, _)| p + 1));
    if !text.ends_with('\n') && !text.is_empty() {
        line_boundaries.push(text.len());
    }
    line_boundaries.dedup();
    line_boundaries.retain(|&o| !lexed.multiline.iter().any(|&(s, e)| s < o && o < e));

    Ok(FileIndex {
        path: path.to_string(),
        types,
        member_points,
        body_points,
        import_point,
        imports,
        package,
        identifiers,
        line_boundaries,
        len: text.len(),
    })
}

/// Text with all comments removed (used for comment-free line counts).
pub fn strip_comments(text: &str) -> String {
    let Ok(lexed) = lex("<memory>", text) else {
        return text.to_string();
    };
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for &(s, e) in &lexed.comments {
        out.push_str(&text[last..s]);
        // keep line structure
        out.extend(text[s..e].chars().filter(|c| *c == '\n'));
        last = e;
    }
    out.push_str(&text[last..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(text: &str) -> FileIndex {
        index_file("A.java", text).unwrap()
    }

    #[test]
    fn smallest_class() {
        let fi = single("class A { int m() { return 1; } }");
        assert_eq!(fi.types.len(), 1);
        assert_eq!(fi.types[0].name, "A");
        assert_eq!(fi.member_points.len(), 1);
        assert_eq!(fi.body_points.len(), 1);
        assert_eq!(fi.body_points[0].owner, "m");
    }

    #[test]
    fn three_top_level_classes() {
        let src = "public class A {\n  public int k() { return 10; }\n}\npublic class B extends A {\n  public int k() { return 20; }\n  public int m() { return super.k(); }\n}\npublic class C extends B {\n  public static void main(String[] args) {\n    C c = new C();\n    System.out.println(c.m());\n  }\n}\n";
        let fi = single(src);
        let names: Vec<_> = fi.types.iter().filter(|t| t.top_level).map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["A", "B", "C"]);
        assert_eq!(fi.body_points.len(), 4);
    }

    #[test]
    fn brace_in_string_is_ignored() {
        let fi = single("class A { String s = \"{\"; }");
        assert_eq!(fi.types.len(), 1);
        assert_eq!(fi.body_points.len(), 0);
    }

    #[test]
    fn braces_in_comments_and_chars() {
        let fi = single("class A { /* { */ char c = '{'; // }\n }");
        assert_eq!(fi.types.len(), 1);
    }

    #[test]
    fn unbalanced_and_unterminated() {
        assert!(matches!(
            index_file("A.java", "class A { "),
            Err(ScanError::UnbalancedBraces { .. })
        ));
        assert!(matches!(
            index_file("A.java", "class A { } }"),
            Err(ScanError::UnbalancedBraces { .. })
        ));
        assert!(matches!(
            index_file("A.java", "class A { String s = \"abc; }"),
            Err(ScanError::UnterminatedLiteral { .. })
        ));
        assert!(matches!(
            index_file("A.java", "class A { /* }"),
            Err(ScanError::UnterminatedLiteral { .. })
        ));
    }

    #[test]
    fn constructors_lambdas_and_initializers_are_not_methods() {
        let src = "class A {\n  A() { super(); }\n  static { }\n  { }\n  Runnable r = () -> { };\n  Object o = new Object() { public String toString() { return \"\"; } };\n  void m() { Runnable q = () -> { }; }\n}";
        let fi = single(src);
        let names: Vec<_> = fi.body_points.iter().map(|p| p.owner.as_str()).collect();
        assert_eq!(names, ["m"]);
    }

    #[test]
    fn enums_and_records_have_no_member_points() {
        let src = "enum E { X, Y; void m() { } }\nrecord R(int x) { int twice() { return 2 * x; } }\n@interface Ann { }";
        let fi = single(src);
        assert_eq!(fi.types.len(), 3);
        assert_eq!(fi.types[2].kind, TypeKind::Annotation);
        assert!(fi.member_points.is_empty());
        assert_eq!(fi.body_points.len(), 2);
    }

    #[test]
    fn annotated_and_generic_methods() {
        let src = "class A {\n  @SuppressWarnings(\"x\") public <T> T id(T t) throws Exception { return t; }\n  @Override public String toString() { return \"a\"; }\n}";
        let fi = single(src);
        let names: Vec<_> = fi.body_points.iter().map(|p| p.owner.as_str()).collect();
        assert_eq!(names, ["id", "toString"]);
    }

    #[test]
    fn package_and_imports() {
        let src = "package p.q;\nimport java.util.List;\nimport static org.junit.Assert.assertEquals;\nclass A { }";
        let fi = single(src);
        assert_eq!(fi.imports, ["java.util.List", "staticorg.junit.Assert.assertEquals"]);
        assert!(fi.import_point.line_start);
        assert_eq!(fi.import_point.offset, "package p.q;\n".len());
    }

    #[test]
    fn line_boundaries_skip_block_comments_and_text_blocks() {
        let src = "class A {\n/* a\nb */\n  String s = \"\"\"\n    x\n    \"\"\";\n}";
        let fi = single(src);
        let lines: Vec<usize> = fi.line_boundaries.iter().map(|&o| line_of(src, o)).collect();
        // lines 3 (inside comment) and 5, 6 (inside text block) are excluded
        assert!(!lines.contains(&3));
        assert!(!lines.contains(&5));
        assert!(!lines.contains(&6));
        assert!(lines.contains(&2));
        assert!(lines.contains(&4));
    }

    #[test]
    fn public_flag_on_types() {
        let fi = single("public class T { class Inner { } }\nclass U { }");
        assert!(fi.types.iter().find(|t| t.name == "T").unwrap().is_public);
        assert!(!fi.types.iter().find(|t| t.name == "U").unwrap().is_public);
        assert!(!fi.types.iter().find(|t| t.name == "Inner").unwrap().top_level);
    }

    #[test]
    fn comment_stripping_keeps_lines() {
        let s = strip_comments("a // x\n/* y\n z */ b");
        assert_eq!(s, "a \n\n b");
    }
}
