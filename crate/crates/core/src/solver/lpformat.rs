//! CPLEX-style LP text for [`ConicProgram`], plus a plain solution format.
//!
//! Cones are written as quadratic rows `[ - y ^ 2 + x1 ^ 2 + x2 ^ 2 ] <= 0`
//! and SOS1 sets as `name: S1:: a:1 b:2`. Every bound is written explicitly.
//! Variable names are sanitized to LP identifiers; [`lp_names`] gives the
//! mapping used by both the writer and [`read_solution`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use super::{ConicProgram, ObjSense, Sense, SolveResult, SolveStats, SolveStatus, VarId, VarKind};
use crate::{Error, Result};

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

fn sanitize(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "_.!#$%&(){}@~".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E')
    {
        s.insert(0, 'v');
    }
    s
}

/// LP identifiers for every variable, unique and deterministic.
pub fn lp_names(program: &ConicProgram) -> Vec<String> {
    let mut used = BTreeSet::new();
    program
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut s = sanitize(&v.name);
            if !used.insert(s.clone()) {
                s = format!("{s}#{i}");
                used.insert(s.clone());
            }
            s
        })
        .collect()
}

fn write_terms(out: &mut String, terms: &[(VarId, f64)], names: &[String]) {
    if terms.is_empty() {
        out.push_str(" 0.0");
    }
    for &(v, a) in terms {
        let (sign, mag) = if a < 0.0 { ('-', -a) } else { ('+', a) };
        let _ = write!(out, " {sign} {} {}", fmt_num(mag), names[v.0]);
    }
}

/// Render `program` as LP text.
pub fn write_lp(program: &ConicProgram) -> String {
    let names = lp_names(program);
    let mut out = String::new();
    let _ = writeln!(out, "\\ Problem name: {}", program.name);
    out.push_str(match program.objective.sense {
        ObjSense::Minimize => "Minimize\n",
        ObjSense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    let mut terms = program.objective.terms.clone();
    terms.sort_by_key(|t| t.0);
    write_terms(&mut out, &terms, &names);
    if program.objective.constant != 0.0 {
        let c = program.objective.constant;
        let (sign, mag) = if c < 0.0 { ('-', -c) } else { ('+', c) };
        let _ = write!(out, " {sign} {}", fmt_num(mag));
    }
    out.push_str("\nSubject To\n");
    for (i, row) in program.rows.iter().enumerate() {
        let _ = write!(out, " {}:", row_name(&row.name, i, "r"));
        write_terms(&mut out, &row.terms, &names);
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", fmt_num(row.rhs));
    }
    for (i, cone) in program.cones.iter().enumerate() {
        let _ = write!(out, " {}: [ - {} ^ 2", row_name(&cone.name, i, "q"), names[cone.head.0]);
        for v in &cone.tail {
            let _ = write!(out, " + {} ^ 2", names[v.0]);
        }
        out.push_str(" ] <= 0\n");
    }
    out.push_str("Bounds\n");
    for (i, v) in program.variables.iter().enumerate() {
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            let _ = writeln!(out, " {} free", names[i]);
        } else if v.lower == v.upper {
            let _ = writeln!(out, " {} = {}", names[i], fmt_num(v.lower));
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lower), names[i], fmt_num(v.upper));
        }
    }
    let binaries: Vec<&str> = program
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(i, _)| names[i].as_str())
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    if !program.sos1.is_empty() {
        out.push_str("SOS\n");
        for (i, set) in program.sos1.iter().enumerate() {
            let _ = write!(out, " {}: S1::", row_name(&set.name, i, "s"));
            for (k, v) in set.members.iter().enumerate() {
                let _ = write!(out, " {}:{}", names[v.0], k + 1);
            }
            out.push('\n');
        }
    }
    out.push_str("End\n");
    out
}

fn row_name(name: &str, index: usize, prefix: &str) -> String {
    if name.is_empty() {
        format!("{prefix}{index}")
    } else {
        sanitize(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Op(String),
}

fn lex(text: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut toks = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '+' || d == '-') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let s: String = chars[start..i].iter().collect();
            toks.push(Tok::Num(
                s.parse().map_err(|_| Error::Parse(format!("bad number `{s}`")))?,
            ));
        } else if "<>=".contains(c) {
            let mut s = String::from(c);
            if i + 1 < chars.len() && chars[i + 1] == '=' {
                s.push('=');
                i += 1;
            }
            i += 1;
            // normalize `=<`, `=>`
            toks.push(Tok::Op(match s.as_str() {
                "<" => "<=".into(),
                ">" => ">=".into(),
                _ => s,
            }));
        } else if "+-[]^:".contains(c) {
            toks.push(Tok::Op(c.to_string()));
            i += 1;
        } else {
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && !"+-[]^:<>=".contains(chars[i]) {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            match s.to_ascii_lowercase().as_str() {
                "inf" | "infinity" => toks.push(Tok::Num(f64::INFINITY)),
                _ => toks.push(Tok::Name(s)),
            }
        }
    }
    Ok(toks)
}

/// Linear expression with squares: (linear terms, squared terms, constant).
type Expr = (Vec<(String, f64)>, Vec<(String, f64)>, f64);

fn parse_expr(toks: &[Tok], pos: &mut usize) -> Result<Expr> {
    let mut lin = Vec::new();
    let mut sq = Vec::new();
    let mut constant = 0.0;
    let mut in_bracket = false;
    loop {
        let mut sign = 1.0;
        let mut saw = false;
        while let Some(Tok::Op(op)) = toks.get(*pos) {
            match op.as_str() {
                "+" => {}
                "-" => sign = -sign,
                "[" => in_bracket = true,
                "]" => in_bracket = false,
                _ => break,
            }
            *pos += 1;
            saw = true;
        }
        let coef = match toks.get(*pos) {
            Some(Tok::Num(v)) => {
                *pos += 1;
                Some(*v)
            }
            _ => None,
        };
        match toks.get(*pos) {
            Some(Tok::Name(name)) if !(in_bracket && name.eq_ignore_ascii_case("end")) => {
                let name = name.clone();
                *pos += 1;
                let a = sign * coef.unwrap_or(1.0);
                if toks.get(*pos) == Some(&Tok::Op("^".into())) {
                    if toks.get(*pos + 1) != Some(&Tok::Num(2.0)) {
                        return Err(Error::Parse(format!("only squares are supported after `{name}`")));
                    }
                    *pos += 2;
                    sq.push((name, a));
                } else {
                    lin.push((name, a));
                }
            }
            _ => match coef {
                Some(v) => constant += sign * v,
                None => {
                    if saw && !matches!(toks.get(*pos), Some(Tok::Op(_)) | None) {
                        return Err(Error::Parse("dangling operator".into()));
                    }
                    if !saw {
                        break;
                    }
                }
            },
        }
        if in_bracket {
            continue;
        }
        match toks.get(*pos) {
            Some(Tok::Op(op)) if op == "+" || op == "-" || op == "[" => {}
            _ => {
                if !matches!(toks.get(*pos), Some(Tok::Name(_)) | Some(Tok::Num(_))) {
                    break;
                }
            }
        }
    }
    Ok((lin, sq, constant))
}

#[derive(PartialEq, Clone, Copy)]
enum Section {
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Sos,
    Ignored,
}

fn section_of(line: &str) -> Option<(Section, Option<ObjSense>)> {
    let l = line.trim().to_ascii_lowercase();
    Some(match l.as_str() {
        "maximize" | "maximum" | "max" => (Section::Objective, Some(ObjSense::Maximize)),
        "minimize" | "minimum" | "min" => (Section::Objective, Some(ObjSense::Minimize)),
        "subject to" | "such that" | "st" | "s.t." => (Section::Constraints, None),
        "bounds" | "bound" => (Section::Bounds, None),
        "binaries" | "binary" | "bin" => (Section::Binaries, None),
        "sos" => (Section::Sos, None),
        "generals" | "general" | "gen" => (Section::Ignored, None),
        _ => return None,
    })
}

/// Parse LP text as written by [`write_lp`]. General integers are rejected.
pub fn parse_lp(text: &str) -> Result<ConicProgram> {
    let mut name = String::from("lp");
    let mut sense = None;
    let mut sections: Vec<(Section, String)> = Vec::new();
    for raw in text.lines() {
        let (line, comment) = match raw.find('\\') {
            Some(k) => (&raw[..k], Some(&raw[k + 1..])),
            None => (raw, None),
        };
        if let Some(c) = comment {
            if let Some(rest) = c.trim().strip_prefix("Problem name:") {
                name = rest.trim().to_string();
            }
        }
        if line.trim().eq_ignore_ascii_case("end") {
            break;
        }
        if let Some((sec, s)) = section_of(line) {
            if sec == Section::Ignored {
                return Err(Error::Parse("general integer variables are not supported".into()));
            }
            if s.is_some() {
                sense = s;
            }
            sections.push((sec, String::new()));
            continue;
        }
        match sections.last_mut() {
            Some((_, body)) => {
                body.push_str(line);
                body.push('\n');
            }
            None if line.trim().is_empty() => {}
            None => return Err(Error::Parse(format!("text before objective section: `{}`", line.trim()))),
        }
    }
    let sense = sense.ok_or_else(|| Error::Parse("missing objective section".into()))?;
    let mut p = ConicProgram::new(name, sense);
    let mut ids: BTreeMap<String, VarId> = BTreeMap::new();
    // variables are created on first sight with the LP default bounds [0, ∞)
    fn var(p: &mut ConicProgram, ids: &mut BTreeMap<String, VarId>, n: &str) -> VarId {
        if let Some(v) = ids.get(n) {
            return *v;
        }
        let v = p.add_var(n, 0.0, f64::INFINITY);
        ids.insert(n.to_string(), v);
        v
    }
    for (sec, body) in &sections {
        match sec {
            Section::Objective => {
                let toks = lex(body)?;
                let mut pos = 0;
                if let (Some(Tok::Name(_)), Some(Tok::Op(c))) = (toks.first(), toks.get(1)) {
                    if c == ":" {
                        pos = 2;
                    }
                }
                let (lin, sq, c) = parse_expr(&toks, &mut pos)?;
                if !sq.is_empty() || pos != toks.len() {
                    return Err(Error::Parse("objective must be linear".into()));
                }
                for (n, a) in lin {
                    let v = var(&mut p, &mut ids, &n);
                    p.add_objective(v, a);
                }
                p.add_objective_constant(c);
                p.normalize();
            }
            Section::Constraints => {
                let toks = lex(body)?;
                let mut pos = 0;
                let mut count = 0;
                while pos < toks.len() {
                    let mut rname = format!("r{count}");
                    if let (Some(Tok::Name(n)), Some(Tok::Op(c))) = (toks.get(pos), toks.get(pos + 1)) {
                        if c == ":" {
                            rname = n.clone();
                            pos += 2;
                        }
                    }
                    let (lin, sq, c) = parse_expr(&toks, &mut pos)?;
                    let op = match toks.get(pos) {
                        Some(Tok::Op(op)) if op == "<=" || op == ">=" || op == "=" || op == "=<" || op == "=>" => op.clone(),
                        _ => return Err(Error::Parse(format!("row `{rname}` lacks a relation"))),
                    };
                    pos += 1;
                    let mut neg = false;
                    while let Some(Tok::Op(s)) = toks.get(pos) {
                        if s == "-" {
                            neg = !neg;
                        } else if s != "+" {
                            break;
                        }
                        pos += 1;
                    }
                    let rhs = match toks.get(pos) {
                        Some(Tok::Num(v)) => if neg { -*v } else { *v },
                        _ => return Err(Error::Parse(format!("row `{rname}` lacks a numeric rhs"))),
                    };
                    pos += 1;
                    count += 1;
                    let sense = match op.as_str() {
                        "<=" | "=<" => Sense::Le,
                        ">=" | "=>" => Sense::Ge,
                        _ => Sense::Eq,
                    };
                    if sq.is_empty() {
                        let terms: Vec<(VarId, f64)> =
                            lin.iter().map(|(n, a)| (var(&mut p, &mut ids, n), *a)).collect();
                        p.add_row(rname, terms, sense, rhs - c);
                    } else {
                        let heads: Vec<&(String, f64)> = sq.iter().filter(|t| t.1 < 0.0).collect();
                        let ok = lin.is_empty()
                            && c == 0.0
                            && rhs == 0.0
                            && sense == Sense::Le
                            && heads.len() == 1
                            && sq.iter().all(|t| libm::fabs(t.1) == 1.0);
                        if !ok {
                            return Err(Error::Parse(format!(
                                "quadratic row `{rname}` is not a second-order cone"
                            )));
                        }
                        let head = var(&mut p, &mut ids, &heads[0].0);
                        let tail = sq
                            .iter()
                            .filter(|t| t.1 > 0.0)
                            .map(|(n, _)| var(&mut p, &mut ids, n))
                            .collect();
                        p.add_cone(rname, head, tail);
                    }
                }
            }
            Section::Bounds => {
                for line in body.lines().filter(|l| !l.trim().is_empty()) {
                    let toks = lex(line)?;
                    let num = |t: &[Tok], i: usize| -> Result<f64> {
                        let (neg, k) = match t.get(i) {
                            Some(Tok::Op(s)) if s == "-" => (true, i + 1),
                            Some(Tok::Op(s)) if s == "+" => (false, i + 1),
                            _ => (false, i),
                        };
                        match t.get(k) {
                            Some(Tok::Num(v)) => Ok(if neg { -*v } else { *v }),
                            _ => Err(Error::Parse(format!("bad bound line `{}`", line.trim()))),
                        }
                    };
                    let bad = || Error::Parse(format!("bad bound line `{}`", line.trim()));
                    let name_at = |t: &[Tok]| -> Option<(usize, String)> {
                        t.iter().enumerate().find_map(|(i, tk)| match tk {
                            Tok::Name(n) if !n.eq_ignore_ascii_case("free") => Some((i, n.clone())),
                            _ => None,
                        })
                    };
                    let (k, n) = name_at(&toks).ok_or_else(bad)?;
                    let v = var(&mut p, &mut ids, &n);
                    let var_ref = &mut p.variables[v.0];
                    if toks.len() == 2 && matches!(&toks[1], Tok::Name(f) if f.eq_ignore_ascii_case("free")) {
                        var_ref.lower = f64::NEG_INFINITY;
                        var_ref.upper = f64::INFINITY;
                        continue;
                    }
                    // lhs part: `l <=` before the name
                    if k > 0 {
                        let l = num(&toks, 0)?;
                        match toks.get(k - 1) {
                            Some(Tok::Op(o)) if o == "<=" => var_ref.lower = l,
                            Some(Tok::Op(o)) if o == ">=" => var_ref.upper = l,
                            Some(Tok::Op(o)) if o == "=" => {
                                var_ref.lower = l;
                                var_ref.upper = l;
                            }
                            _ => return Err(bad()),
                        }
                    }
                    if k + 1 < toks.len() {
                        let r = num(&toks, k + 2)?;
                        match toks.get(k + 1) {
                            Some(Tok::Op(o)) if o == "<=" => var_ref.upper = r,
                            Some(Tok::Op(o)) if o == ">=" => var_ref.lower = r,
                            Some(Tok::Op(o)) if o == "=" => {
                                var_ref.lower = r;
                                var_ref.upper = r;
                            }
                            _ => return Err(bad()),
                        }
                    }
                }
            }
            Section::Binaries => {
                for n in body.split_whitespace() {
                    let v = var(&mut p, &mut ids, n);
                    let var_ref = &mut p.variables[v.0];
                    var_ref.kind = VarKind::Binary;
                    var_ref.lower = var_ref.lower.max(0.0);
                    var_ref.upper = var_ref.upper.min(1.0);
                }
            }
            Section::Sos => {
                for line in body.lines().filter(|l| !l.trim().is_empty()) {
                    let (head, rest) = line
                        .split_once("::")
                        .ok_or_else(|| Error::Parse(format!("bad SOS line `{}`", line.trim())))?;
                    let (sname, kind) = head.split_once(':').unwrap_or(("", head));
                    if !kind.trim().eq_ignore_ascii_case("s1") {
                        return Err(Error::Parse("only SOS1 sets are supported".into()));
                    }
                    let mut members = Vec::new();
                    for item in rest.split_whitespace() {
                        let n = item.rsplit_once(':').map(|(n, _)| n).unwrap_or(item);
                        members.push(var(&mut p, &mut ids, n));
                    }
                    let sname = sname.trim();
                    let sname = if sname.is_empty() { format!("s{}", p.sos1.len()) } else { sname.to_string() };
                    p.add_sos1(sname, members);
                }
            }
            Section::Ignored => {}
        }
    }
    p.validate()?;
    Ok(p)
}

/// Plain solution text: an objective header and one `name value` per line.
pub fn write_solution(program: &ConicProgram, result: &SolveResult) -> String {
    let names = lp_names(program);
    let mut out = String::new();
    let _ = writeln!(out, "# Objective value = {}", fmt_num(result.objective));
    for (n, v) in names.iter().zip(&result.values) {
        let _ = writeln!(out, "{n} {}", fmt_num(*v));
    }
    out
}

/// Read a solution for `program`. Accepts `# Objective value = v` or
/// `objective v` headers; names may be LP identifiers or the originals.
/// Every variable must be present.
pub fn read_solution(text: &str, program: &ConicProgram) -> Result<SolveResult> {
    let names = lp_names(program);
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, n) in names.iter().enumerate() {
        index.insert(n.as_str(), i);
    }
    for (i, v) in program.variables.iter().enumerate() {
        index.entry(v.name.as_str()).or_insert(i);
    }
    let mut values = alloc::vec![f64::NAN; program.n_vars()];
    let mut objective = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((_, v)) = rest.split_once('=') {
                if rest.to_ascii_lowercase().contains("objective") {
                    objective = Some(parse_num(v.trim())?);
                }
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(n), Some(v)) = (parts.next(), parts.next()) else {
            return Err(Error::Parse(format!("bad solution line `{line}`")));
        };
        if n.eq_ignore_ascii_case("objective") {
            objective = Some(parse_num(v)?);
            continue;
        }
        if let Some(&i) = index.get(n) {
            values[i] = parse_num(v)?;
        }
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::Parse(format!(
            "solution is missing variable `{}`",
            program.variables[i].name
        )));
    }
    let objective = objective.unwrap_or_else(|| program.objective_value(&values));
    Ok(SolveResult {
        status: SolveStatus::Optimal,
        values,
        objective,
        best_bound: objective,
        row_duals: None,
        reduced_costs: None,
        stats: SolveStats::default(),
    })
}

fn parse_num(s: &str) -> Result<f64> {
    match s {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| Error::Parse(format!("bad number `{s}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample() -> ConicProgram {
        let mut p = ConicProgram::new("demo", ObjSense::Maximize);
        let x = p.add_var("g[ME,1]", 0.0, 3.5);
        let y = p.add_free("y");
        let z = p.add_binary("z");
        let h = p.add_var("h", 0.0, f64::INFINITY);
        let w = p.add_var("w", -2.0, -2.0);
        p.add_row("bal", [(x, 1.0), (y, -0.1), (w, 1e-9)], Sense::Eq, 2.0);
        p.add_row("", [(x, 3.0), (z, -4.0)], Sense::Le, -1.5);
        p.add_cone("k", h, vec![x, y]);
        p.add_sos1("pair", vec![x, z]);
        p.add_objective(x, 2.5);
        p.add_objective(z, -1.0);
        p.add_objective_constant(7.0);
        p
    }

    #[test]
    fn round_trip() {
        let p = sample();
        let text = write_lp(&p);
        let q = parse_lp(&text).unwrap();
        assert_eq!(q.name, "demo");
        assert_eq!(q.n_vars(), p.n_vars());
        assert_eq!(q.rows.len(), 2);
        assert_eq!(q.rows[0].terms.len(), 3);
        assert_eq!(q.rows[1].rhs, -1.5);
        assert_eq!(q.cones[0].tail.len(), 2);
        assert_eq!(q.sos1[0].members.len(), 2);
        assert_eq!(q.objective.constant, 7.0);
        let x = [1.0, -2.0, 1.0, 3.0, -2.0];
        let names = lp_names(&p);
        let perm: Vec<usize> = names.iter().map(|n| q.var_by_name(n).unwrap().0).collect();
        let mut xq = vec![0.0; 5];
        for (i, &k) in perm.iter().enumerate() {
            xq[k] = x[i];
            assert_eq!(q.variables[k].lower, p.variables[i].lower);
            assert_eq!(q.variables[k].upper, p.variables[i].upper);
            assert_eq!(q.variables[k].kind, p.variables[i].kind);
        }
        assert_eq!(q.objective_value(&xq), p.objective_value(&x));
        // a second pass is a fixed point
        assert_eq!(parse_lp(&write_lp(&q)).unwrap(), q);
    }

    #[test]
    fn solution_round_trip_and_missing_variable() {
        let p = sample();
        let r = SolveResult {
            status: SolveStatus::Optimal,
            values: vec![1.0, 0.5, 0.0, 2.0, -2.0],
            objective: 9.5,
            best_bound: 9.5,
            row_duals: None,
            reduced_costs: None,
            stats: SolveStats::default(),
        };
        let text = write_solution(&p, &r);
        let back = read_solution(&text, &p).unwrap();
        assert_eq!(back.values, r.values);
        assert_eq!(back.objective, 9.5);
        let truncated: String = text.lines().filter(|l| !l.starts_with("y ")).map(|l| format!("{l}\n")).collect();
        let err = read_solution(&truncated, &p).unwrap_err();
        assert!(format!("{err}").contains("`y`"));
    }
}
