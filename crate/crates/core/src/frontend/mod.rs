//! Structured Text and textual SFC front end: lexing, parsing, name
//! resolution and source rendering.

pub mod ast;
mod lexer;
mod parser;
mod printer;
pub mod resolve;

use thiserror::Error;

pub use ast::*;
pub use lexer::quote_string;
pub use parser::is_keyword;
pub use printer::{expr_to_string, pretty_print};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("{path}:{line}:{col}: {message}")]
    Syntax {
        path: String,
        line: u32,
        col: u32,
        message: String,
    },
    #[error("{path}:{line}:{col}: unresolved identifier '{name}'")]
    Unresolved {
        path: String,
        line: u32,
        col: u32,
        name: String,
    },
    #[error("{path}:{line}:{col}: duplicate declaration of '{name}'")]
    Duplicate {
        path: String,
        line: u32,
        col: u32,
        name: String,
    },
    #[error("{path}:{line}:{col}: {message}")]
    Invalid {
        path: String,
        line: u32,
        col: u32,
        message: String,
    },
    #[error("recursive call chain: {}", chain.join(" -> "))]
    Recursion { chain: Vec<String> },
    #[error("task '{task}': {message}")]
    Task { task: String, message: String },
    #[error("no source files given")]
    NoSources,
}

/// Parses and resolves a set of source files plus the task configuration.
///
/// Files are numbered in the order given; every statement carries its
/// file index, line and column.
pub fn parse_project(
    sources: &[SourceFile],
    tasks: Vec<TaskDecl>,
) -> Result<SourceProject, FrontendError> {
    if sources.is_empty() {
        return Err(FrontendError::NoSources);
    }
    let mut project = SourceProject {
        files: sources.to_vec(),
        tasks,
        ..SourceProject::default()
    };
    for (idx, src) in sources.iter().enumerate() {
        let parsed = parser::parse_file(idx as u32, &src.path, &src.text)?;
        project.globals.extend(parsed.globals);
        project.pous.extend(parsed.pous);
        if let Some(tr) = parsed.trace_runtime {
            if project.trace_runtime.is_some() {
                return Err(FrontendError::Syntax {
                    path: src.path.clone(),
                    line: 1,
                    col: 1,
                    message: "TRACE_RUNTIME declared in more than one file".into(),
                });
            }
            project.trace_runtime = Some(tr);
        }
    }
    resolve::validate(&project)?;
    Ok(project)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIGN: &str = "FUNCTION_BLOCK Sign
VAR_INPUT
    in : INT;
END_VAR
VAR_OUTPUT
    out : INT;
    negative : BOOL;
END_VAR
    IF in < 0 THEN
        out := -1;
        negative := TRUE;
    ELSIF in = 0 THEN
        out := 0;
        negative := FALSE;
    ELSE
        out := 1;
        negative := FALSE;
    END_IF;
END_FUNCTION_BLOCK
";

    fn one(text: &str) -> Result<SourceProject, FrontendError> {
        parse_project(&[SourceFile::new("a.st", text)], vec![])
    }

    #[test]
    fn sign_fixture_shape() {
        let p = one(SIGN).unwrap();
        let Body::St(stmts) = &p.pous[0].body else {
            panic!("expected ST body")
        };
        assert_eq!(stmts.len(), 1);
        let StmtKind::If {
            branches,
            else_body,
        } = &stmts[0].kind
        else {
            panic!("expected IF")
        };
        assert_eq!(branches.len(), 2);
        assert_eq!(else_body.as_ref().map(Vec::len), Some(2));
        assert_eq!(stmts[0].loc, SourceLoc::new(0, 9, 5));
    }

    #[test]
    fn sign_fixture_print_is_a_fixpoint() {
        let p = one(SIGN).unwrap();
        let printed = pretty_print(&p);
        assert_eq!(printed[0].1, SIGN);
    }

    #[test]
    fn unresolved_identifier() {
        let e = one("PROGRAM P x := 1; END_PROGRAM").unwrap_err();
        assert!(matches!(e, FrontendError::Unresolved { ref name, .. } if name == "x"), "{e}");
    }

    #[test]
    fn unresolved_call() {
        let e = one("PROGRAM P Missing(); END_PROGRAM").unwrap_err();
        assert!(matches!(e, FrontendError::Unresolved { ref name, .. } if name == "Missing"));
    }

    #[test]
    fn duplicate_pou() {
        let e = one("PROGRAM P END_PROGRAM PROGRAM P END_PROGRAM").unwrap_err();
        assert!(matches!(e, FrontendError::Duplicate { .. }));
    }

    #[test]
    fn duplicate_action() {
        let e = one("FUNCTION_BLOCK F ACTION A: END_ACTION ACTION A: END_ACTION END_FUNCTION_BLOCK")
            .unwrap_err();
        assert!(matches!(e, FrontendError::Duplicate { ref name, .. } if name == "A"));
    }

    #[test]
    fn recursion_is_rejected() {
        let src = "FUNCTION F : INT VAR_INPUT n : INT; END_VAR F := G(n); END_FUNCTION
                   FUNCTION G : INT VAR_INPUT n : INT; END_VAR G := F(n); END_FUNCTION";
        let e = one(src).unwrap_err();
        let FrontendError::Recursion { chain } = e else {
            panic!("{e}")
        };
        assert_eq!(chain.first(), chain.last());
    }

    #[test]
    fn self_instantiation_is_recursion() {
        let e = one("FUNCTION_BLOCK F VAR f : F; END_VAR END_FUNCTION_BLOCK").unwrap_err();
        assert!(matches!(e, FrontendError::Recursion { .. }));
    }

    #[test]
    fn task_must_reference_program() {
        let task = TaskDecl {
            name: "T".into(),
            cycle_ms: 10,
            priority: 0,
            entry_pou: "F".into(),
        };
        let e = parse_project(
            &[SourceFile::new("a.st", "FUNCTION_BLOCK F END_FUNCTION_BLOCK")],
            vec![task],
        )
        .unwrap_err();
        assert!(matches!(e, FrontendError::Task { .. }));
    }

    #[test]
    fn duplicate_task_priority() {
        let t = |n: &str| TaskDecl {
            name: n.into(),
            cycle_ms: 10,
            priority: 1,
            entry_pou: "P".into(),
        };
        let e = parse_project(
            &[SourceFile::new("a.st", "PROGRAM P END_PROGRAM")],
            vec![t("A"), t("B")],
        )
        .unwrap_err();
        assert!(e.to_string().contains("priority"));
    }

    #[test]
    fn sfc_requires_single_initial_step() {
        let e = one("PROGRAM S STEP A END_STEP END_PROGRAM").unwrap_err();
        assert!(e.to_string().contains("exactly one initial step"), "{e}");
    }

    #[test]
    fn sfc_action_must_exist() {
        let e = one("PROGRAM S STEP A INITIAL ACTION Nope QUALIFIER N END_STEP END_PROGRAM")
            .unwrap_err();
        assert!(matches!(e, FrontendError::Unresolved { ref name, .. } if name == "Nope"));
    }

    #[test]
    fn fb_member_access_resolves() {
        let src = "FUNCTION_BLOCK Motor VAR_INPUT on : BOOL; END_VAR VAR_OUTPUT running : BOOL; END_VAR
                     running := on;
                   END_FUNCTION_BLOCK
                   PROGRAM P VAR m : Motor; t : TON; r : BOOL; END_VAR
                     m(on := TRUE);
                     t(IN := r, PT := T#1s);
                     r := m.running AND NOT t.Q;
                   END_PROGRAM";
        one(src).unwrap();
        let bad = src.replace("m.running", "m.speed");
        assert!(matches!(one(&bad).unwrap_err(), FrontendError::Unresolved { .. }));
    }

    #[test]
    fn exit_outside_loop() {
        assert!(one("PROGRAM P EXIT; END_PROGRAM").is_err());
    }

    #[test]
    fn empty_sources_rejected() {
        assert_eq!(parse_project(&[], vec![]), Err(FrontendError::NoSources));
    }

    #[test]
    fn statement_locations_point_into_the_file() {
        let p = one(SIGN).unwrap();
        let lines: Vec<&str> = SIGN.lines().collect();
        let Body::St(stmts) = &p.pous[0].body else {
            panic!()
        };
        resolve::for_each_stmt(stmts, &mut |s| {
            let line = lines[s.loc.line as usize - 1];
            assert!((s.loc.col as usize) <= line.len());
        });
    }
}
