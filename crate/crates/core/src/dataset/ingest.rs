use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::{InteractionSet, SetBuilder};
use crate::error::{Error, Result};

/// Raw interaction file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// `user<TAB>item[<TAB>...]`
    Tsv,
    /// One JSON object per line with `reviewerID` and `asin`.
    AmazonJsonLines,
    /// `user::item::rating::timestamp`
    MovielensDat,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(Self::Tsv),
            "amazon_json_lines" | "amazon" | "jsonl" => Ok(Self::AmazonJsonLines),
            "movielens_dat" | "movielens" | "dat" => Ok(Self::MovielensDat),
            other => Err(Error::Config(format!("unknown input format {other:?}"))),
        }
    }
}

#[derive(Deserialize)]
struct AmazonRecord {
    #[serde(rename = "reviewerID")]
    reviewer_id: String,
    asin: String,
}

pub fn ingest_interactions(path: &Path, format: InputFormat) -> Result<InteractionSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(BufReader::new(file), format, path)
}

/// Parses interactions from any reader. `origin` is only used in error messages.
pub fn parse_interactions<R: BufRead>(reader: R, format: InputFormat, origin: &Path) -> Result<InteractionSet> {
    let mut builder = SetBuilder::default();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno,
            msg,
        };
        match format {
            InputFormat::Tsv => {
                let mut fields = line.split('\t');
                let user = fields.next().unwrap_or("");
                let item = fields.next().ok_or_else(|| bad("expected user<TAB>item".into()))?;
                if user.is_empty() || item.is_empty() {
                    return Err(bad("empty user or item id".into()));
                }
                builder.push(user, item);
            }
            InputFormat::AmazonJsonLines => {
                let rec: AmazonRecord =
                    serde_json::from_str(line).map_err(|e| bad(format!("invalid review record: {e}")))?;
                if rec.reviewer_id.is_empty() || rec.asin.is_empty() {
                    return Err(bad("empty reviewerID or asin".into()));
                }
                builder.push(&rec.reviewer_id, &rec.asin);
            }
            InputFormat::MovielensDat => {
                let fields: Vec<&str> = line.split("::").collect();
                if fields.len() != 4 {
                    return Err(bad(format!(
                        "expected user::item::rating::timestamp, got {} fields",
                        fields.len()
                    )));
                }
                if fields[0].is_empty() || fields[1].is_empty() {
                    return Err(bad("empty user or item id".into()));
                }
                // Rating and timestamp are validated but unused: any rating is an interaction.
                fields[2]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad rating {:?}", fields[2])))?;
                fields[3]
                    .trim()
                    .parse::<i64>()
                    .map_err(|_| bad(format!("bad timestamp {:?}", fields[3])))?;
                builder.push(fields[0], fields[1]);
            }
        }
    }
    let set = builder.finish();
    if set.is_empty() {
        return Err(Error::NoInteractions);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, format: InputFormat) -> Result<InteractionSet> {
        parse_interactions(text.as_bytes(), format, Path::new("<mem>"))
    }

    #[test]
    fn tsv_dedup() {
        let s = parse("u1\tiA\nu1\tiA\nu2\tiB\n", InputFormat::Tsv).unwrap();
        assert_eq!((s.n_users(), s.n_items(), s.len()), (2, 2, 2));
    }

    #[test]
    fn empty_file_errors() {
        let err = parse("", InputFormat::Tsv).unwrap_err();
        assert_eq!(err.to_string(), "no interactions");
    }

    #[test]
    fn first_seen_order_matches_enumeration() {
        let text = "c\tz\na\tz\nc\tx\nb\ty\na\tx\nb\tz\n";
        let s = parse(text, InputFormat::Tsv).unwrap();
        // Oracle: walk the lines and record each id the first time it appears.
        let mut users: Vec<&str> = Vec::new();
        let mut items: Vec<&str> = Vec::new();
        let mut pairs = Vec::new();
        for line in text.lines() {
            let (u, i) = line.split_once('\t').unwrap();
            if !users.contains(&u) {
                users.push(u);
            }
            if !items.contains(&i) {
                items.push(i);
            }
            pairs.push((
                users.iter().position(|x| *x == u).unwrap(),
                items.iter().position(|x| *x == i).unwrap(),
            ));
        }
        assert_eq!(s.user_ids(), users.as_slice());
        assert_eq!(s.item_ids(), items.as_slice());
        assert_eq!(s.pairs(), pairs.as_slice());
        assert_eq!(s.user_ids(), &["c", "a", "b"]);
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = parse("u\ti\nbroken\n", InputFormat::Tsv).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn amazon_json_lines() {
        let text = r#"{"overall": 5.0, "reviewerID": "A1", "asin": "B00", "unixReviewTime": 1}
{"reviewerID": "A2", "asin": "B00"}
{"reviewerID": "A1", "asin": "B01", "reviewText": "ok"}
"#;
        let s = parse(text, InputFormat::AmazonJsonLines).unwrap();
        assert_eq!((s.n_users(), s.n_items(), s.len()), (2, 2, 3));
        let err = parse("{\"asin\": \"B\"}\n", InputFormat::AmazonJsonLines).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn movielens_dat() {
        let s = parse("1::1193::5::978300760\n1::661::3::978302109\n2::1193::1::978298413\n", InputFormat::MovielensDat).unwrap();
        assert_eq!((s.n_users(), s.n_items(), s.len()), (2, 2, 3));
        assert!(parse("1::2::x::3\n", InputFormat::MovielensDat).is_err());
        assert!(parse("1::2::3\n", InputFormat::MovielensDat).is_err());
    }

    #[test]
    fn format_names() {
        assert_eq!("tsv".parse::<InputFormat>().unwrap(), InputFormat::Tsv);
        assert_eq!("amazon_json_lines".parse::<InputFormat>().unwrap(), InputFormat::AmazonJsonLines);
        assert_eq!("movielens_dat".parse::<InputFormat>().unwrap(), InputFormat::MovielensDat);
        assert!("csv".parse::<InputFormat>().is_err());
    }
}
