//! Tool-call body grammar: `name(arg, key=value, key="value")`.
//!
//! Both positional and keyword styles are accepted and canonicalized to the
//! toolkit's keyword order. Unknown keyword arguments are preserved verbatim
//! so compatibility hints (`is_transfer=0`) survive canonicalization. Every
//! failure mode gets a distinct diagnostic; these feed the tool-call
//! accuracy metric.

use crate::sandbox::{ToolCall, ToolName};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToolCallError {
    #[error("tool call syntax error: {0}")]
    Syntax(String),
    #[error("unknown tool: {0}")]
    UnknownTool(String),
    #[error("{tool}: expected {expected}, got {got} positional argument(s)")]
    Arity {
        tool: &'static str,
        expected: String,
        got: usize,
    },
    #[error("{tool}: missing required argument {arg}")]
    MissingArg {
        tool: &'static str,
        arg: &'static str,
    },
    #[error("{tool}: duplicate argument {arg}")]
    DuplicateArg { tool: &'static str, arg: String },
    #[error("{tool}: positional argument after keyword argument")]
    PositionalAfterKeyword { tool: &'static str },
}

/// Keyword aliases seen in the wild mapped onto canonical parameter names.
fn canonical_key(tool: ToolName, key: &str) -> Option<&'static str> {
    let alias: &[(&str, &str)] = match tool {
        ToolName::FlightSearch | ToolName::TrainSearch => &[
            ("depart_city", "depart_city"),
            ("depart_city_name", "depart_city"),
            ("depart_station", "depart_city"),
            ("arrival_city", "arrival_city"),
            ("arrival_city_name", "arrival_city"),
            ("arrive_station", "arrival_city"),
            ("arrive_city", "arrival_city"),
            ("depart_date", "depart_date"),
        ],
        ToolName::RoutePlanning => &[
            ("origin", "origin"),
            ("origin_name", "origin"),
            ("destination", "destination"),
            ("destination_name", "destination"),
            ("city_name", "city_name"),
            ("city", "city_name"),
        ],
        ToolName::HotelSearch => &[
            ("city_name", "city_name"),
            ("city", "city_name"),
            ("checkin_date", "checkin_date"),
            ("checkin", "checkin_date"),
            ("checkout_date", "checkout_date"),
            ("checkout", "checkout_date"),
            ("hotel_name", "hotel_name"),
        ],
        ToolName::PoiSearch => &[
            ("query", "query"),
            ("city_name", "city_name"),
            ("city", "city_name"),
        ],
        ToolName::WebSearch => &[("query", "query")],
    };
    alias.iter().find(|(a, _)| *a == key).map(|(_, c)| *c)
}

/// Strip one level of matching quotes.
fn unquote(raw: &str) -> String {
    let v = raw.trim();
    for q in ['"', '\''] {
        if v.len() >= 2 && v.starts_with(q) && v.ends_with(q) {
            return v[1..v.len() - 1].to_string();
        }
    }
    v.to_string()
}

/// Split an argument list on commas that sit outside quotes.
fn split_args(inner: &str) -> Result<Vec<String>, ToolCallError> {
    let mut parts = Vec::new();
    let mut current = String::new();
    let mut quote: Option<char> = None;
    for c in inner.chars() {
        match quote {
            Some(q) => {
                current.push(c);
                if c == q {
                    quote = None;
                }
            }
            None => match c {
                '"' | '\'' => {
                    quote = Some(c);
                    current.push(c);
                }
                ',' => {
                    parts.push(current.trim().to_string());
                    current.clear();
                }
                '(' | ')' => {
                    return Err(ToolCallError::Syntax(
                        "nested parentheses in arguments".into(),
                    ))
                }
                _ => current.push(c),
            },
        }
    }
    if quote.is_some() {
        return Err(ToolCallError::Syntax("unterminated quote".into()));
    }
    let last = current.trim();
    if !last.is_empty() {
        parts.push(last.to_string());
    } else if !parts.is_empty() {
        return Err(ToolCallError::Syntax("trailing comma".into()));
    }
    Ok(parts)
}

/// Parse a tool-call body into a canonical [`ToolCall`].
pub fn parse_tool_call(body: &str) -> Result<ToolCall, ToolCallError> {
    let text = body.trim();
    let open = text
        .find('(')
        .ok_or_else(|| ToolCallError::Syntax("missing opening parenthesis".into()))?;
    if !text.ends_with(')') {
        return Err(ToolCallError::Syntax("missing closing parenthesis".into()));
    }
    let name_raw = text[..open].trim();
    if name_raw.is_empty()
        || !name_raw
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return Err(ToolCallError::Syntax(format!(
            "bad tool name: {name_raw:?}"
        )));
    }
    let tool = ToolName::parse(name_raw)
        .ok_or_else(|| ToolCallError::UnknownTool(name_raw.to_string()))?;
    let tool_str = tool.as_str();
    let inner = &text[open + 1..text.len() - 1];
    let raw_args = split_args(inner)?;

    let params = tool.param_names();
    let mut canonical: Vec<Option<String>> = vec![None; params.len()];
    let mut extras: Vec<(String, String)> = Vec::new();
    let mut positional: Vec<String> = Vec::new();
    let mut saw_keyword = false;

    for raw in &raw_args {
        // key=value only when the '=' sits outside quotes at the top level.
        let keyed = match raw.find('=') {
            Some(eq) if !raw.starts_with(['"', '\'']) => {
                let key = raw[..eq].trim();
                if key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') && !key.is_empty() {
                    Some((key.to_string(), unquote(&raw[eq + 1..])))
                } else {
                    None
                }
            }
            _ => None,
        };
        match keyed {
            Some((key, value)) => {
                saw_keyword = true;
                match canonical_key(tool, &key) {
                    Some(canon) => {
                        let slot = params
                            .iter()
                            .position(|p| *p == canon)
                            .expect("canon in params");
                        if canonical[slot].is_some() {
                            return Err(ToolCallError::DuplicateArg {
                                tool: tool_str,
                                arg: canon.to_string(),
                            });
                        }
                        canonical[slot] = Some(value);
                    }
                    None => {
                        if extras.iter().any(|(k, _)| *k == key) {
                            return Err(ToolCallError::DuplicateArg {
                                tool: tool_str,
                                arg: key,
                            });
                        }
                        extras.push((key, value));
                    }
                }
            }
            None => {
                if saw_keyword {
                    return Err(ToolCallError::PositionalAfterKeyword { tool: tool_str });
                }
                positional.push(unquote(raw));
            }
        }
    }

    // Positional arguments fill canonical slots in order. hotel_search keeps
    // the legacy 4-positional order (city, hotel, checkin, checkout) used by
    // production transcripts, while its canonical keyword order puts
    // hotel_name last and optional.
    let positional_order: Vec<usize> = if tool == ToolName::HotelSearch && positional.len() == 4 {
        vec![0, 3, 1, 2]
    } else {
        (0..params.len()).collect()
    };
    if positional.len() > positional_order.len() {
        return Err(ToolCallError::Arity {
            tool: tool_str,
            expected: format!("at most {}", params.len()),
            got: positional.len(),
        });
    }
    for (value, slot) in positional.into_iter().zip(positional_order) {
        if canonical[slot].is_some() {
            return Err(ToolCallError::DuplicateArg {
                tool: tool_str,
                arg: params[slot].to_string(),
            });
        }
        canonical[slot] = Some(value);
    }

    for (slot, param) in params.iter().enumerate().take(tool.required_arity()) {
        if canonical[slot].is_none() {
            return Err(ToolCallError::MissingArg {
                tool: tool_str,
                arg: param,
            });
        }
    }

    extras.sort();
    let args = params
        .iter()
        .zip(canonical)
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect();
    Ok(ToolCall {
        name: tool,
        args,
        extras,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positional_flight_call_canonicalizes() {
        let call = parse_tool_call("flight_search('Beijing', 'Shanghai', '2025-07-02')").unwrap();
        assert_eq!(call.name, ToolName::FlightSearch);
        assert_eq!(
            call.args,
            vec![
                ("depart_city".to_string(), "Beijing".to_string()),
                ("arrival_city".to_string(), "Shanghai".to_string()),
                ("depart_date".to_string(), "2025-07-02".to_string()),
            ]
        );
        assert!(call.extras.is_empty());
    }

    #[test]
    fn station_aliases_and_extras_are_preserved() {
        let call = parse_tool_call(
            "train_search(depart_station=\"Suzhou\", arrive_station=\"Wuhan\", depart_date=\"2025-06-26\", is_transfer=0)",
        )
        .unwrap();
        assert_eq!(call.name, ToolName::TrainSearch);
        assert_eq!(call.arg("depart_city"), Some("Suzhou"));
        assert_eq!(call.arg("arrival_city"), Some("Wuhan"));
        assert_eq!(call.arg("depart_date"), Some("2025-06-26"));
        assert_eq!(
            call.extras,
            vec![("is_transfer".to_string(), "0".to_string())]
        );
    }

    #[test]
    fn hotel_search_missing_dates_is_arity_error() {
        let err = parse_tool_call("hotel_search(\"Beijing\")").unwrap_err();
        assert!(matches!(
            err,
            ToolCallError::MissingArg {
                arg: "checkin_date",
                ..
            }
        ));
    }

    #[test]
    fn hotel_search_four_positional_uses_legacy_order() {
        let call = parse_tool_call("hotel_search('Beijing', 'Atour', '2025-07-02', '2025-07-05')")
            .unwrap();
        assert_eq!(call.arg("city_name"), Some("Beijing"));
        assert_eq!(call.arg("hotel_name"), Some("Atour"));
        assert_eq!(call.arg("checkin_date"), Some("2025-07-02"));
        assert_eq!(call.arg("checkout_date"), Some("2025-07-05"));
    }

    #[test]
    fn hotel_search_three_positional_skips_hotel_name() {
        let call = parse_tool_call("hotel_search('Beijing', '2025-07-02', '2025-07-05')").unwrap();
        assert_eq!(call.arg("hotel_name"), None);
        assert_eq!(call.arg("checkin_date"), Some("2025-07-02"));
    }

    #[test]
    fn unknown_tool_and_syntax_diagnostics_are_distinct() {
        assert!(matches!(
            parse_tool_call("fly_search('x')"),
            Err(ToolCallError::UnknownTool(_))
        ));
        assert!(matches!(
            parse_tool_call("flight_search('x'"),
            Err(ToolCallError::Syntax(_))
        ));
        assert!(matches!(
            parse_tool_call("flight_search('a','b','c','d')"),
            Err(ToolCallError::Arity { .. })
        ));
        assert!(matches!(
            parse_tool_call("web_search(query='a', query='b')"),
            Err(ToolCallError::DuplicateArg { .. })
        ));
        assert!(matches!(
            parse_tool_call("flight_search(depart_city='a', 'b', 'c')"),
            Err(ToolCallError::PositionalAfterKeyword { .. })
        ));
    }

    #[test]
    fn commas_inside_quotes_do_not_split() {
        let call = parse_tool_call("web_search(\"hotels, flights, and trains\")").unwrap();
        assert_eq!(call.arg("query"), Some("hotels, flights, and trains"));
    }

    #[test]
    fn render_parse_round_trip() {
        let call = parse_tool_call(
            "hotel_search(city_name=\"Wuhan\", checkin_date=\"2025-06-26\", checkout_date=\"2025-06-27\")",
        )
        .unwrap();
        let reparsed = parse_tool_call(&call.render()).unwrap();
        assert_eq!(call, reparsed);
    }
}
