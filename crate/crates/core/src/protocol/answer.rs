//! The machine-readable itinerary block inside `<answer>` bodies.
//!
//! Answers are markdown prose for humans plus one fenced block tagged
//! `itinerary` holding the structured plan as JSON. Extraction failure is
//! in-band: the trajectory-level verifier treats it as an incomplete answer.

use crate::domain::Itinerary;

pub const FENCE_OPEN: &str = "```itinerary";
pub const FENCE_CLOSE: &str = "```";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("answer contains no itinerary block")]
    MissingBlock,
    #[error("itinerary block is not valid JSON: {0}")]
    BadJson(String),
}

/// Append the fenced structured block to an answer body.
pub fn render_itinerary_block(itinerary: &Itinerary) -> String {
    let json = serde_json::to_string(itinerary).expect("itinerary serializes");
    format!("{FENCE_OPEN}\n{json}\n{FENCE_CLOSE}")
}

/// Pull the structured itinerary out of an answer body.
pub fn extract_itinerary(answer_body: &str) -> Result<Itinerary, ExtractError> {
    let start = answer_body
        .find(FENCE_OPEN)
        .ok_or(ExtractError::MissingBlock)?;
    let content_start = start + FENCE_OPEN.len();
    let rest = &answer_body[content_start..];
    let end = rest.find(FENCE_CLOSE).ok_or(ExtractError::MissingBlock)?;
    let json = rest[..end].trim();
    serde_json::from_str(json).map_err(|e| ExtractError::BadJson(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{HotelStay, Itinerary};

    #[test]
    fn block_round_trip() {
        let it = Itinerary {
            hotel_stay: Some(HotelStay {
                record_id: "HTL-X-00".into(),
                name: "Atour Hotel".into(),
                city: "Beijing".into(),
                checkin: "2025-07-02".parse().unwrap(),
                checkout: "2025-07-05".parse().unwrap(),
                total_price_cents: 90_000,
            }),
            total_cost_cents: 90_000,
            ..Itinerary::default()
        };
        let body = format!(
            "Here is your plan.\n\n{}\n\nEnjoy!",
            render_itinerary_block(&it)
        );
        assert_eq!(extract_itinerary(&body).unwrap(), it);
    }

    #[test]
    fn prose_only_answer_fails_extraction() {
        assert_eq!(
            extract_itinerary("Sounds great, have a nice trip!"),
            Err(ExtractError::MissingBlock)
        );
    }

    #[test]
    fn invalid_invariants_still_extract() {
        // Checkout before checkin: extraction succeeds, the verifier flags it.
        let it = Itinerary {
            hotel_stay: Some(HotelStay {
                record_id: "H".into(),
                name: "H".into(),
                city: "C".into(),
                checkin: "2025-07-05".parse().unwrap(),
                checkout: "2025-07-02".parse().unwrap(),
                total_price_cents: 0,
            }),
            ..Itinerary::default()
        };
        let extracted = extract_itinerary(&render_itinerary_block(&it)).unwrap();
        assert!(extracted.hotel_stay.unwrap().nights() < 0);
    }

    #[test]
    fn garbage_json_reports_bad_json() {
        let body = format!("{FENCE_OPEN}\nnot json\n{FENCE_CLOSE}");
        assert!(matches!(
            extract_itinerary(&body),
            Err(ExtractError::BadJson(_))
        ));
    }
}
