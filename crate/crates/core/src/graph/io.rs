//! Line-oriented text format:
//!
//! ```text
//! # comment
//! A <author>
//! P <paper> <year>
//! T <topic>
//! W <author> <paper>
//! C <citing> <cited>
//! B <paper> <topic>
//! ```
//!
//! Node records must precede the edge records that reference them.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{GraphBuilder, TemporalAcademicGraph, Year};
use crate::error::{Error, Result};

pub fn write_graph(graph: &TemporalAcademicGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# academic graph: {} authors, {} papers, {} topics",
        graph.n_authors(),
        graph.n_papers(),
        graph.n_topics()
    );
    for a in graph.authors() {
        let _ = writeln!(out, "A {a}");
    }
    for p in graph.papers() {
        let _ = writeln!(out, "P {p} {}", graph.paper_years[p.idx()]);
    }
    for t in graph.topics() {
        let _ = writeln!(out, "T {t}");
    }
    for (a, p) in graph.writes_edges() {
        let _ = writeln!(out, "W {a} {p}");
    }
    for (c, d) in graph.cites_edges() {
        let _ = writeln!(out, "C {c} {d}");
    }
    for (p, t) in graph.about_edges() {
        let _ = writeln!(out, "B {p} {t}");
    }
    out
}

pub fn save_graph(graph: &TemporalAcademicGraph, path: &Path) -> Result<()> {
    fs::write(path, write_graph(graph)).map_err(|e| Error::io(path, e))
}

pub fn load_graph(path: &Path) -> Result<TemporalAcademicGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_graph(&text)
}

pub fn parse_graph(text: &str) -> Result<TemporalAcademicGraph> {
    let mut builder = GraphBuilder::new();
    let mut authors = HashSet::new();
    let mut papers = HashSet::new();
    let mut topics = HashSet::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let tag = fields.next().unwrap_or_default();
        let args: Vec<&str> = fields.collect();
        let expect = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::Parse {
                    line: line_no,
                    message: format!("record `{tag}` takes {n} fields, found {}", args.len()),
                })
            }
        };
        let num = |s: &str| -> Result<u32> {
            s.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid id `{s}`"),
            })
        };
        let need = |set: &HashSet<u32>, kind: &str, id: u32| -> Result<()> {
            if set.contains(&id) {
                Ok(())
            } else {
                Err(Error::Integrity(format!(
                    "line {line_no}: edge references undeclared {kind} {id}"
                )))
            }
        };
        match tag {
            "A" => {
                expect(1)?;
                let id = num(args[0])?;
                authors.insert(id);
                builder.author(id);
            }
            "P" => {
                expect(2)?;
                let id = num(args[0])?;
                let year: Year = args[1].parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("invalid year `{}`", args[1]),
                })?;
                papers.insert(id);
                builder.paper(id, year);
            }
            "T" => {
                expect(1)?;
                let id = num(args[0])?;
                topics.insert(id);
                builder.topic(id);
            }
            "W" => {
                expect(2)?;
                let (a, p) = (num(args[0])?, num(args[1])?);
                need(&authors, "author", a)?;
                need(&papers, "paper", p)?;
                builder.writes(a, p);
            }
            "C" => {
                expect(2)?;
                let (c, d) = (num(args[0])?, num(args[1])?);
                need(&papers, "paper", c)?;
                need(&papers, "paper", d)?;
                builder.cites(c, d);
            }
            "B" => {
                expect(2)?;
                let (p, t) = (num(args[0])?, num(args[1])?);
                need(&papers, "paper", p)?;
                need(&topics, "topic", t)?;
                builder.about(p, t);
            }
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown record type `{other}`"),
                })
            }
        }
    }
    builder.build()
}
