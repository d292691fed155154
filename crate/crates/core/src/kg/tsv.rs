use std::io::{BufRead, BufReader, Read, Write};

use super::{parse_timestamp, FactTime, KgError, TemporalKG, TimeInterval};

/// Column layout accepted by [`load_quadruples`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadrupleFormat {
    /// 4 columns (point) or 5 columns (interval), decided per line.
    #[default]
    Auto,
    /// `subject \t predicate \t object \t timestamp` only.
    Point,
    /// `subject \t predicate \t object \t begin \t end` only.
    Interval,
}

/// Reads tab-separated quadruples. Blank lines and `#` comments are skipped;
/// duplicate facts keep the id of their first occurrence.
pub fn load_quadruples<R: Read>(source: R, format: QuadrupleFormat) -> Result<TemporalKG, KgError> {
    let mut builder = TemporalKG::builder();
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| KgError::Io(e.to_string()))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let allowed = match format {
            QuadrupleFormat::Auto => cols.len() == 4 || cols.len() == 5,
            QuadrupleFormat::Point => cols.len() == 4,
            QuadrupleFormat::Interval => cols.len() == 5,
        };
        if !allowed {
            return Err(KgError::MalformedLine {
                line: line_no,
                found: cols.len(),
            });
        }
        for (col, field) in cols[..3].iter().zip(["subject", "predicate", "object"]) {
            if col.trim().is_empty() {
                return Err(KgError::EmptyLabel { line: line_no, field });
            }
        }
        let parse = |s: &str| {
            parse_timestamp(s.trim()).map_err(|source| KgError::MalformedTimestamp { line: line_no, source })
        };
        let time = if cols.len() == 4 {
            FactTime::point(parse(cols[3])?)
        } else {
            let interval = TimeInterval::new(parse(cols[3])?, parse(cols[4])?)
                .map_err(|source| KgError::InvertedInterval { line: line_no, source })?;
            FactTime::interval(interval)
        };
        builder
            .add(cols[0], cols[1], cols[2], time)
            .map_err(|e| match e {
                KgError::EmptyLabel { field, .. } => KgError::EmptyLabel { line: line_no, field },
                other => other,
            })?;
    }
    Ok(builder.build())
}

/// Writes facts in id order in the format [`load_quadruples`] reads.
pub fn dump_quadruples<W: Write>(kg: &TemporalKG, mut sink: W) -> std::io::Result<()> {
    for f in kg.facts() {
        match f.time {
            FactTime::Point { at } => {
                writeln!(sink, "{}\t{}\t{}\t{}", f.subject, f.predicate, f.object, at)?
            }
            FactTime::Interval { begin, end } => writeln!(
                sink,
                "{}\t{}\t{}\t{}\t{}",
                f.subject, f.predicate, f.object, begin, end
            )?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::FactId;
    use proptest::prelude::*;

    fn load(text: &str) -> Result<TemporalKG, KgError> {
        load_quadruples(text.as_bytes(), QuadrupleFormat::Auto)
    }

    #[test]
    fn single_line() {
        let kg = load("A\tvisit\tB\t2010-05-16\n").unwrap();
        assert_eq!((kg.len(), kg.entities().len(), kg.predicates().len()), (1, 2, 1));
        assert_eq!(kg.timestamps().len(), 1);
    }

    #[test]
    fn empty_stream() {
        let kg = load("").unwrap();
        assert!(kg.is_empty() && kg.entities().is_empty() && kg.predicates().is_empty());
        assert!(kg.timestamps().is_empty());
    }

    #[test]
    fn duplicate_lines_collapse() {
        let kg = load("A\tvisit\tB\t2010-05-16\nA\tvisit\tB\t2010-05-16\n").unwrap();
        assert_eq!(kg.len(), 1);
    }

    #[test]
    fn ids_follow_first_occurrence() {
        let kg = load("# header\nA\tp\tB\t2010\n\nC\tp\tD\t2011\nA\tp\tB\t2010\nE\tq\tF\t1990\t1995\n").unwrap();
        let subjects: Vec<_> = kg.facts().iter().map(|f| (f.id, f.subject.as_str())).collect();
        assert_eq!(subjects, vec![(FactId(0), "A"), (FactId(1), "C"), (FactId(2), "E")]);
        assert!(kg.facts()[2].time.is_interval());
    }

    #[test]
    fn errors_name_the_line() {
        assert_eq!(load("A\tB\tC\n"), Err(KgError::MalformedLine { line: 1, found: 3 }));
        match load("A\tp\tB\t2010\nA\tp\tB\t2010-13-01\n") {
            Err(KgError::MalformedTimestamp { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(load("A\tp\tB\t2001\t1995\n"), Err(KgError::InvertedInterval { line: 1, .. })));
        assert!(matches!(load("\tp\tB\t2001\n"), Err(KgError::EmptyLabel { line: 1, .. })));
    }

    #[test]
    fn format_restricts_columns() {
        let interval = "A\tp\tB\t1990\t1995\n";
        assert!(load_quadruples(interval.as_bytes(), QuadrupleFormat::Point).is_err());
        assert!(load_quadruples(interval.as_bytes(), QuadrupleFormat::Interval).is_ok());
    }

    proptest! {
        #[test]
        fn load_is_idempotent_on_dump(
            rows in prop::collection::vec(
                ("[A-Za-z ]{1,8}", "[a-z ]{1,8}", "[A-Z][a-z]{0,5}", 2000i32..2005, 1u8..=12, proptest::option::of(1u8..=28), proptest::option::of(2005i32..2010)),
                0..30,
            )
        ) {
            let mut text = String::new();
            for (s, p, o, y, m, d, end) in rows {
                if s.trim().is_empty() || p.trim().is_empty() { continue; }
                let begin = match d { Some(d) => format!("{y}-{m:02}-{d:02}"), None => format!("{y}-{m:02}") };
                match end {
                    Some(e) => text.push_str(&format!("{s}\t{p}\t{o}\t{begin}\t{e}\n")),
                    None => text.push_str(&format!("{s}\t{p}\t{o}\t{begin}\n")),
                }
            }
            let kg = load(&text).unwrap();
            let mut dumped = Vec::new();
            dump_quadruples(&kg, &mut dumped).unwrap();
            let again = load_quadruples(dumped.as_slice(), QuadrupleFormat::Auto).unwrap();
            prop_assert_eq!(&again, &kg);
        }
    }
}
