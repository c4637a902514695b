//! Small synthetic data set that exercises every subcommand.

use std::fmt::Write as _;

use chrono::Duration;
use clap::Args;
use mindtrace::behave::{simulate_records, write_behave_csv, BehaveSchema, BnParams};
use mindtrace::corpus::{write_quotes, BrexitLabel, Person, PersonCategory, Quote, TerrorismLabel};
use mindtrace::synth::{date, normal, rng};
use mindtrace::{Error, Result};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::output::Output;
use crate::settings::Settings;
use crate::Common;

#[derive(Args)]
pub struct DemoArgs {
    /// Number of persons; the first is called `demo`
    #[arg(long)]
    persons: Option<usize>,
    #[arg(long)]
    quotes_per_person: Option<usize>,
    /// Persons in behave.csv
    #[arg(long)]
    behave_persons: Option<usize>,
}

const VOCAB: [&[&str]; 3] = [
    &["community", "dialogue", "schools", "services", "neighbours", "jobs", "budget", "health", "roads", "housing"],
    &["betrayal", "purity", "enemies", "invaders", "uprising", "traitors", "homeland", "decline", "elites", "resist"],
    &["attack", "weapons", "martyr", "strike", "bomb", "target", "cell", "operation", "soldiers", "destroy"],
];
const LEAVE: &[&str] = &["sovereignty", "leave", "borders", "control", "independence"];
const REMAIN: &[&str] = &["remain", "single", "market", "cooperation", "europe"];
const FILLER: &[&str] = &["we", "must", "the", "people", "today", "said", "our", "country", "will", "now"];

/// Statement type given person category.
const TYPE_GIVEN_CATEGORY: [[f64; 3]; 3] = [[0.9, 0.08, 0.02], [0.35, 0.55, 0.1], [0.2, 0.3, 0.5]];

fn draw<R: Rng>(r: &mut R, probs: &[f64]) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn sentence<R: Rng>(r: &mut R, topic: &[&str], stance: Option<&[&str]>) -> String {
    let mut words: Vec<&str> = Vec::new();
    for _ in 0..6 {
        words.push(topic.choose(r).copied().unwrap_or("the"));
    }
    if let Some(st) = stance {
        for _ in 0..3 {
            words.push(st.choose(r).copied().unwrap_or("the"));
        }
    }
    for _ in 0..4 {
        let pos = r.random_range(0..=words.len());
        words.insert(pos, FILLER.choose(r).copied().unwrap_or("the"));
    }
    words.join(" ")
}

pub fn run(a: DemoArgs, s: &mut Settings, c: &Common) -> Result<()> {
    let n_persons = s.value("persons", a.persons, 30)?;
    let per = s.value("quotes_per_person", a.quotes_per_person, 20)?;
    let n_behave = s.value("behave_persons", a.behave_persons, 200)?;
    if n_persons < 3 || per < 1 || n_behave < 2 {
        return Err(Error::invalid("demo needs at least 3 persons, 1 quote each and 2 behaviour records"));
    }
    let mut r = rng(c.seed);
    let mut persons = Vec::new();
    let mut quotes = Vec::new();
    let mut votes = String::from("person_id,date,vote\n");
    for i in 0..n_persons {
        let id = if i == 0 { "demo".to_string() } else { format!("p{i:03}") };
        let category = PersonCategory::ALL[i % 3];
        persons.push(Person {
            id: id.clone(),
            display_name: format!("Person {i}"),
            group: if i % 2 == 0 { "group_a" } else { "group_b" }.into(),
            person_category: Some(category),
        });
        let leave: f64 = r.random();
        let mut days: Vec<i64> = (0..per).map(|_| r.random_range(5844..7670)).collect();
        days.sort_unstable();
        for (j, d) in days.into_iter().enumerate() {
            let s_type = draw(&mut r, &TYPE_GIVEN_CATEGORY[category.index()]);
            let brexit = if r.random::<f64>() < 0.6 {
                let pro = r.random::<f64>() < leave;
                let strong = r.random::<f64>() < 0.3;
                Some(match (pro, strong) {
                    (true, true) => BrexitLabel::H,
                    (true, false) => BrexitLabel::S,
                    (false, true) => BrexitLabel::A,
                    (false, false) => BrexitLabel::N,
                })
            } else {
                Some(BrexitLabel::O)
            };
            let stance = match brexit {
                Some(BrexitLabel::H | BrexitLabel::S) => Some(LEAVE),
                Some(BrexitLabel::A | BrexitLabel::N) => Some(REMAIN),
                _ => None,
            };
            quotes.push(Quote {
                id: format!("{id}-q{j:03}"),
                person_id: id.clone(),
                timestamp: date(d),
                text: sentence(&mut r, VOCAB[s_type], stance),
                language: "en".into(),
                terrorism_label: TerrorismLabel::from_index(s_type),
                brexit_label: brexit,
                embedding: None,
            });
        }
        // supporters of leaving mostly vote against the motions
        let start = date(6940);
        for k in 0..12 {
            let u: f64 = r.random();
            let p_for = (1.0 - leave + 0.1 * normal(&mut r)).clamp(0.0, 1.0);
            let vote = if u < 0.1 {
                "absent"
            } else if r.random::<f64>() < p_for {
                "for"
            } else {
                "against"
            };
            let _ = writeln!(votes, "{id},{},{vote}", start + Duration::days(30 * k));
        }
    }

    let schema = BehaveSchema::default();
    let mut params = BnParams::zeros(schema.dims());
    let mut pr = rng(c.seed.wrapping_add(1));
    for w in [&mut params.w_m, &mut params.w_o, &mut params.w_c] {
        w.iter_mut().for_each(|v| *v = 0.5 * normal(&mut pr));
    }
    params.w_b = [0.5, 0.3, 0.2];
    let records = simulate_records(&params, n_behave, 24, c.seed.wrapping_add(2));

    // every behaviour feature feeds the vote share directly
    let mut nodes = schema.columns();
    nodes.push("vote_share".into());
    let edges: Vec<(String, String)> = schema.columns().into_iter().map(|f| (f, "vote_share".to_string())).collect();
    let dag = mindtrace::behave::Dag::from_named_edges(nodes, &edges)?;

    let mut out = Output::new(&c.out, "demo", c.seed)?;
    out.write_with("persons.jsonl", |w| {
        for p in &persons {
            serde_json::to_writer(&mut *w, p)?;
            w.push(b'\n');
        }
        Ok(())
    })?;
    out.write_with("quotes.jsonl", |w| write_quotes(w, &quotes))?;
    out.write_bytes("votes.csv", votes.as_bytes())?;
    out.write_with("behave.csv", |w| write_behave_csv(w, &schema, &records))?;
    out.write_bytes("dag.json", format!("{}\n", dag.to_json()?).as_bytes())?;
    out.write_json("truth.json", &params)?;
    out.finish(s)?;
    Ok(())
}
