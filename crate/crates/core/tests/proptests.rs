//! Property tests for the serialization and protocol invariants.

use chrono::NaiveDate;
use deeptravel_core::domain::{
    canonical_text, parse_canonical_text, DayPlan, HotelStay, IntentSet, Itinerary, Leg, PoiVisit,
    TransportMode,
};
use deeptravel_core::protocol::{
    parse_trajectory, render_trajectory, Segment, SegmentKind, Terminal, Trajectory,
};
use proptest::prelude::*;

fn city() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "Beijing".to_string(),
        "Shanghai".to_string(),
        "Xi'an".to_string(),
        "Hong Kong West".to_string(),
        "Wuhan".to_string(),
    ])
}

fn date() -> impl Strategy<Value = NaiveDate> {
    (0u64..60).prop_map(|d| NaiveDate::from_ymd_opt(2025, 6, 1).unwrap() + chrono::Days::new(d))
}

prop_compose! {
    fn intent_set()(
        pair in city().prop_flat_map(|a| (Just(a), city())).prop_filter("distinct", |(a, b)| a != b),
        depart in date(),
        length in prop::option::of(1u32..4),
        budget in prop::option::of(10_000i64..500_000),
        deadline in prop::option::of(360u16..1380),
        pref in prop::option::of(prop::sample::select(vec!["riverside".to_string(), "Atour".to_string()])),
        mode in prop::option::of(prop::sample::select(vec![TransportMode::Flight, TransportMode::Train])),
        poi in prop::option::of(prop::sample::select(vec!["The Great Wall".to_string(), "Yellow Crane Tower".to_string()])),
    ) -> IntentSet {
        IntentSet {
            origin: pair.0,
            destination: pair.1,
            depart_date: depart,
            return_date: None,
            trip_length_days: length,
            arrival_deadline: deadline,
            budget_total: budget,
            hotel_preference: pref,
            transport_mode_preference: mode,
            poi_requirement: poi,
        }
    }
}

proptest! {
    /// Rendering an intent set to text and parsing it back is the identity.
    #[test]
    fn intent_text_round_trip(intents in intent_set()) {
        let text = canonical_text(&intents);
        let parsed = parse_canonical_text(&text);
        prop_assert_eq!(parsed, Some(intents));
    }

    /// Distinct slots render distinct texts (injectivity probe).
    #[test]
    fn intent_text_injective_on_budget(intents in intent_set(), bump in 100i64..10_000) {
        let mut other = intents.clone();
        other.budget_total = Some(intents.budget_total.unwrap_or(0) + bump);
        prop_assert_ne!(canonical_text(&intents), canonical_text(&other));
    }
}

fn leg_strategy() -> impl Strategy<Value = Leg> {
    (
        "[A-Z]{2}[0-9]{4}",
        prop::sample::select(vec![TransportMode::Flight, TransportMode::Train]),
        city(),
        city(),
        date(),
        0u16..1440,
        0u16..1440,
        prop::bool::ANY,
        100i64..500_000,
    )
        .prop_map(
            |(id, mode, origin, destination, date, depart, arrive, next_day, price)| Leg {
                record_id: id,
                mode,
                origin,
                destination,
                date,
                depart_time: depart,
                arrive_time: arrive,
                arrive_next_day: next_day,
                price_cents: price,
            },
        )
}

prop_compose! {
    fn itinerary()(
        outbound in prop::collection::vec(leg_strategy(), 0..3),
        ret in prop::collection::vec(leg_strategy(), 0..3),
        hotel in prop::option::of((city(), date(), 1u64..5, 100i64..300_000)),
        visits in prop::collection::vec((date(), 0u16..1440), 0..4),
    ) -> Itinerary {
        let hotel_stay = hotel.map(|(c, checkin, nights, total)| HotelStay {
            record_id: format!("HTL-{c}-00"),
            name: format!("Hotel {c}"),
            city: c,
            checkin,
            checkout: checkin + chrono::Days::new(nights),
            total_price_cents: total,
        });
        let daily_plan = visits
            .into_iter()
            .map(|(d, t)| DayPlan {
                date: d,
                visits: vec![PoiVisit { poi_id: "POI-X-00".into(), name: "Sight".into(), time: t }],
            })
            .collect();
        let mut it = Itinerary { outbound_legs: outbound, hotel_stay, return_legs: ret, daily_plan, total_cost_cents: 0 };
        it.total_cost_cents = deeptravel_core::domain::itinerary_cost(&it);
        it
    }
}

proptest! {
    /// Itinerary serialization is lossless, fenced block included.
    #[test]
    fn itinerary_round_trips_lossless(it in itinerary()) {
        let json = serde_json::to_string(&it).unwrap();
        let back: Itinerary = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &it);
        let block = deeptravel_core::protocol::render_itinerary_block(&it);
        let extracted = deeptravel_core::protocol::extract_itinerary(&block).unwrap();
        prop_assert_eq!(extracted, it);
    }
}

fn body() -> impl Strategy<Value = String> {
    // Tag-free bodies; delimiter-carrying bodies are rejected by contract.
    "[a-zA-Z0-9 .,:{}\"_()-]{0,40}"
}

fn well_formed_trajectory() -> impl Strategy<Value = Trajectory> {
    (
        prop::collection::vec((body(), body(), prop::bool::ANY, body()), 0..6),
        prop::bool::ANY,
        body(),
    )
        .prop_map(|(turns, answered, answer_body)| {
            let mut segments = Vec::new();
            for (turn, (thought, response, reflect, reflection)) in turns.iter().enumerate() {
                if !thought.is_empty() {
                    let kind = if turn == 0 {
                        SegmentKind::Think
                    } else {
                        SegmentKind::ToolCallThinking
                    };
                    segments.push(Segment {
                        kind,
                        body: thought.clone(),
                        turn_index: turn,
                    });
                }
                segments.push(Segment {
                    kind: SegmentKind::ToolCall,
                    body: format!("web_search(query=\"{turn}\")"),
                    turn_index: turn,
                });
                segments.push(Segment {
                    kind: SegmentKind::ToolResponse,
                    body: response.clone(),
                    turn_index: turn,
                });
                if *reflect {
                    segments.push(Segment {
                        kind: SegmentKind::ToolResponseThinking,
                        body: reflection.clone(),
                        turn_index: turn + 1,
                    });
                }
            }
            let terminal = if answered {
                segments.push(Segment {
                    kind: SegmentKind::Answer,
                    body: answer_body,
                    turn_index: turns.len(),
                });
                Terminal::Answered
            } else {
                Terminal::TurnLimit
            };
            Trajectory {
                query_id: String::new(),
                segments,
                terminal,
                decisions: vec![],
            }
        })
}

proptest! {
    /// parse ∘ render and render ∘ parse are identities on well-formed data.
    #[test]
    fn trajectory_round_trip(trajectory in well_formed_trajectory()) {
        let text = render_trajectory(&trajectory).unwrap();
        let parsed = parse_trajectory(&text);
        prop_assert_eq!(&parsed.segments, &trajectory.segments);
        prop_assert_eq!(parsed.terminal, trajectory.terminal);
        prop_assert_eq!(render_trajectory(&parsed).unwrap(), text);
    }

    /// Inter-tag whitespace is tolerated without changing the parse.
    #[test]
    fn whitespace_between_tags_is_ignored(trajectory in well_formed_trajectory(), pad in 0usize..3) {
        let text = render_trajectory(&trajectory).unwrap();
        let padded = text.replace('\n', &"\n".repeat(pad + 1));
        let parsed = parse_trajectory(&padded);
        prop_assert_eq!(parsed.segments, trajectory.segments);
    }
}

proptest! {
    /// Sampled decisions carry exact, non-positive log-probabilities and the
    /// masked softmax always sums to one over valid templates.
    #[test]
    fn sampling_probabilities_are_coherent(
        bucket in 0u16..384,
        valid_bits in 1u8..128,
        logits in prop::collection::vec(-5.0f64..5.0, 7),
        draw_seed in 0u64..1000,
    ) {
        use deeptravel_core::policy::{probs, sample_decision, unpack_mask, PolicyParams, StateFeatures};
        let mut params = PolicyParams::default();
        let mut row = [0.0; 7];
        row.copy_from_slice(&logits);
        params.logits.insert(bucket, row);
        let valid = unpack_mask(valid_bits);
        let p = probs(&params, bucket, &valid);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        for (i, &prob) in p.iter().enumerate() {
            prop_assert!(prob >= 0.0);
            if !valid[i] {
                prop_assert_eq!(prob, 0.0);
            }
        }
        let mut rng = deeptravel_core::rng::stream(draw_seed, &["prop"]);
        let decision = sample_decision(&params, &StateFeatures { bucket, valid }, &mut rng);
        prop_assert!(valid[decision.chosen as usize]);
        prop_assert!(decision.log_prob <= 1e-12);
        prop_assert!((decision.log_prob - p[decision.chosen as usize].ln()).abs() < 1e-9);
    }
}
