//! Seeded synthetic corpus plus a rule-based stand-in for the language model.
//!
//! The responder answers every prompt template from the prompt text alone,
//! using a small table of offense cues. It is deliberately imperfect: it
//! mistakes snatching for robbery and estimates terms with its own formula,
//! so evaluation runs produce a mix of right and wrong predictions.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ArticleDocument, CaseDocument, CorpusBundle, InterpretationDocument};
use crate::embedding::EmbeddingProvider;
use crate::graph::{build_hierargraph, BuildConfig, HierarGraph};
use crate::llm::{
    ChatBackend, ChatRequest, FnBackend, Gateway, LlmError, RecordingBackend, Script, TemplateId,
};
use crate::pipeline::{evaluate_cases, PipelineConfig, PipelineError};

pub const DEFAULT_SEED: u64 = 7;
pub const TRAIN_CASES: usize = 50;
pub const RESPONDER_NAME: &str = "fixture-responder";

struct Offense {
    name: &'static str,
    article_number: &'static str,
    category: &'static str,
    /// Checklist elements; each is a word that appears in every genuine fact pattern.
    elements: &'static [&'static str],
    base_months: u32,
    phrase: &'static str,
    body: &'static str,
}

const OFFENSES: &[Offense] = &[
    Offense {
        name: "Theft",
        article_number: "264",
        category: "Property",
        elements: &["secretly", "took"],
        base_months: 8,
        phrase: "{d} secretly took a {item} worth {amt} yuan from {place} while nobody was watching.",
        body: "Whoever clandestinely appropriates public or private chattels of a relatively large value, or commits such appropriation repeatedly, shall be sentenced to fixed-term imprisonment of not more than three years, criminal detention or public surveillance.",
    },
    Offense {
        name: "Fraud",
        article_number: "266",
        category: "Property",
        elements: &["deceived", "transferred"],
        base_months: 10,
        phrase: "{d} deceived the victim with a fake {scheme} and the victim transferred {amt} yuan to an account controlled by {d}.",
        body: "Whoever obtains public or private chattels of a relatively large value by fabricating facts or concealing truth shall be sentenced to fixed-term imprisonment of not more than three years.",
    },
    Offense {
        name: "Robbery",
        article_number: "263",
        category: "Violent",
        elements: &["force", "took"],
        base_months: 36,
        phrase: "{d} used force against the victim near {place}, pinned the victim down and took {amt} yuan in cash.",
        body: "Whoever seizes public or private chattels by violence, coercion or other methods shall be sentenced to fixed-term imprisonment of not less than three years and not more than ten years.",
    },
    Offense {
        name: "Forcible Seizure",
        article_number: "267",
        category: "Property",
        elements: &["snatched"],
        base_months: 12,
        phrase: "{d} rode past the victim near {place}, snatched a {item} worth {amt} yuan from the victim's hand and fled.",
        body: "Whoever openly grabs public or private chattels of a relatively large value shall be sentenced to fixed-term imprisonment of not more than three years.",
    },
    Offense {
        name: "Intentional Injury",
        article_number: "234",
        category: "Violent",
        elements: &["attacked", "injury"],
        base_months: 18,
        phrase: "During a quarrel at {place}, {d} attacked the victim with a {weapon}, causing an injury to the victim's head.",
        body: "Whoever intentionally inflicts bodily harm upon another person shall be sentenced to fixed-term imprisonment of not more than three years; whoever causes grave bodily harm shall be sentenced to not less than three years.",
    },
    Offense {
        name: "Intentional Homicide",
        article_number: "232",
        category: "Violent",
        elements: &["deliberately", "killed"],
        base_months: 120,
        phrase: "After a long dispute over money, {d} deliberately killed the victim with a {weapon} at {place}.",
        body: "Whoever intentionally deprives another person of life shall be sentenced to death, life imprisonment or fixed-term imprisonment of not less than ten years.",
    },
    Offense {
        name: "Drug Trafficking",
        article_number: "347",
        category: "Public Safety",
        elements: &["sold", "narcotics"],
        base_months: 30,
        phrase: "{d} sold {grams} grams of narcotics to a buyer at {place} and was caught by police on the spot.",
        body: "Whoever smuggles, traffics in, transports or manufactures controlled substances, regardless of quantity, shall be investigated for criminal responsibility.",
    },
    Offense {
        name: "Dangerous Driving",
        article_number: "133-1",
        category: "Public Safety",
        elements: &["drove", "intoxicated"],
        base_months: 3,
        phrase: "{d} drove a car along the road near {place} while intoxicated, with a blood alcohol level far above the legal limit.",
        body: "Whoever operates a motor vehicle on a public way under the influence of alcohol shall be sentenced to criminal detention and a fine.",
    },
    Offense {
        name: "Embezzlement",
        article_number: "271",
        category: "Economic",
        elements: &["position", "misappropriated"],
        base_months: 24,
        phrase: "{d} took advantage of a position as cashier at {company} and misappropriated {amt} yuan of company funds.",
        body: "Any employee of a company, enterprise or other unit who, taking advantage of official duties, unlawfully takes unit property into personal possession shall be sentenced to fixed-term imprisonment.",
    },
    Offense {
        name: "Offering Bribes",
        article_number: "389",
        category: "Economic",
        elements: &["bribe", "official"],
        base_months: 20,
        phrase: "To win a construction contract from {company}, {d} gave a bribe of {amt} yuan to an official in charge of tendering.",
        body: "Whoever, for the purpose of seeking improper benefits, gives state functionaries money or property shall be investigated for criminal responsibility.",
    },
];

/// Articles no fixture case cites; they exist for checklists and distractors.
const STANDALONE_ARTICLES: &[(&str, &str, &str)] = &[
    ("67", "surrendered", "A criminal who voluntarily gives himself up after committing a crime and truthfully confesses may be given a lighter or mitigated punishment."),
    ("65", "previously", "A recidivist who commits another crime punishable by fixed-term imprisonment within five years after serving a prior sentence shall be given a heavier punishment."),
    ("270", "entrusted", "Whoever illegally takes possession of chattels kept in custody for another person, the amount being relatively large, and refuses to return them shall be sentenced to fixed-term imprisonment."),
    ("275", "destroyed", "Whoever intentionally destroys or damages public or private chattels of a relatively large amount shall be sentenced to fixed-term imprisonment."),
    ("293", "provoked", "Whoever picks quarrels and provokes troubles, wantonly assaulting others under aggravating circumstances, shall be sentenced to fixed-term imprisonment."),
    ("303", "gambling", "Whoever, for the purpose of profit, assembles people to engage in gaming or makes gaming an occupation shall be sentenced to fixed-term imprisonment."),
    ("385", "accepted", "Any state functionary who, taking advantage of office, extorts money or property from another person or illegally accepts property shall be guilty of accepting bribes."),
    ("382", "embezzled", "Any state functionary who, taking advantage of office, appropriates public property by misappropriation, theft or fraud shall be guilty of graft."),
];

const INTERPRETATIONS: &[(&str, &str, &str)] = &[
    ("J01", "264", "Appropriation committed three times or more within two years shall be deemed repeated appropriation. The relatively large value threshold is one thousand to three thousand."),
    ("J02", "266", "Obtaining chattels through telecommunication networks by fabricated facts shall be punished heavily. The relatively large value threshold is three thousand to ten thousand."),
    ("J03", "347", "Trafficking in controlled substances to minors or with arms shall be punished heavily regardless of quantity."),
    ("J04", "133-1", "Blood alcohol content of eighty milligrams per hundred millilitres or above constitutes operation under the influence."),
    ("J05", "234", "Grave bodily harm refers to injuries that cause disability, disfigurement or loss of organ function."),
    ("J06", "67", "Giving oneself up includes waiting at the scene for the arrival of police after reporting the crime."),
];

const NAMES: &[&str] = &[
    "Zhang Wei",
    "Li Na",
    "Wang Fang",
    "Zhao Lei",
    "Chen Jie",
    "Liu Yang",
    "Huang Min",
    "Zhou Tao",
    "Wu Qiang",
    "Xu Li",
];
const PLACES: &[&str] = &[
    "a shopping mall",
    "a bus station",
    "a night market",
    "a residential compound",
    "a train platform",
    "a parking lot",
];
const ITEMS: &[&str] = &[
    "mobile phone",
    "laptop",
    "handbag",
    "gold necklace",
    "bicycle",
    "wallet",
];
const WEAPONS: &[&str] = &["knife", "steel pipe", "brick", "wooden club"];
const SCHEMES: &[&str] = &[
    "investment platform",
    "online shop",
    "job offer",
    "lottery prize",
];
const COMPANIES: &[&str] = &[
    "a logistics company",
    "a property developer",
    "a trading firm",
    "a hospital",
];
const MONTHS: &[&str] = &[
    "January", "March", "May", "June", "August", "October", "November",
];
const SEVERITY: [&str; 3] = ["minor", "serious", "especially serious"];

fn article_id(number: &str) -> String {
    format!("A{number}")
}

fn offense(name: &str) -> &'static Offense {
    OFFENSES
        .iter()
        .find(|o| o.name == name)
        .expect("known offense")
}

/// A training corpus plus held-out test cases.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenFixture {
    pub bundle: CorpusBundle,
    pub test_cases: Vec<CaseDocument>,
}

struct CaseSpec {
    offenses: Vec<&'static Offense>,
    severity: usize,
    surrendered: bool,
    recidivist: bool,
}

fn gold_months(o: &Offense, severity: usize) -> u32 {
    o.base_months + 6 * severity as u32
}

fn make_case(id: String, spec: &CaseSpec, rng: &mut ChaCha8Rng) -> CaseDocument {
    let name = *NAMES.choose(rng).expect("names");
    let mut text = format!(
        "On {} {}, ",
        MONTHS.choose(rng).expect("months"),
        rng.gen_range(1..=28)
    );
    for (i, o) in spec.offenses.iter().enumerate() {
        let amount = 1000 * rng.gen_range(2..=60);
        let phrase = o
            .phrase
            .replace("{d}", name)
            .replace("{amt}", &amount.to_string())
            .replace("{grams}", &rng.gen_range(5..=200).to_string())
            .replace("{place}", PLACES.choose(rng).expect("places"))
            .replace("{item}", ITEMS.choose(rng).expect("items"))
            .replace("{weapon}", WEAPONS.choose(rng).expect("weapons"))
            .replace("{scheme}", SCHEMES.choose(rng).expect("schemes"))
            .replace("{company}", COMPANIES.choose(rng).expect("companies"));
        if i > 0 {
            text.push_str(" Later, ");
        }
        text.push_str(&phrase);
    }
    text.push_str(&format!(
        " The circumstances were {}.",
        SEVERITY[spec.severity]
    ));
    let mut articles: Vec<String> = spec
        .offenses
        .iter()
        .map(|o| article_id(o.article_number))
        .collect();
    if spec.recidivist {
        text.push_str(&format!(
            " {name} had previously been sentenced for a similar offense."
        ));
        articles.push(article_id("65"));
    }
    if spec.surrendered {
        text.push_str(&format!(
            " After the incident, {name} surrendered to the police and confessed."
        ));
        articles.push(article_id("67"));
    }

    let homicide = spec
        .offenses
        .iter()
        .any(|o| o.name == "Intentional Homicide");
    let (penalty_months, life, death) = if homicide && spec.severity == 2 {
        (None, false, true)
    } else if homicide && spec.severity == 1 {
        (None, true, false)
    } else {
        let mut m: u32 = spec
            .offenses
            .iter()
            .map(|o| gold_months(o, spec.severity))
            .sum();
        if spec.recidivist {
            m += 6;
        }
        if spec.surrendered {
            m = m.saturating_sub(3).max(1);
        }
        (Some(m), false, false)
    };
    CaseDocument {
        case_id: id,
        fact_text: text,
        defendants: vec![name.to_owned()],
        charge_labels: spec.offenses.iter().map(|o| o.name.to_owned()).collect(),
        cited_article_ids: articles,
        penalty_months,
        life_imprisonment: life,
        death_penalty: death,
        category: Some(spec.offenses[0].category.to_owned()),
    }
}

fn random_spec(o: &'static Offense, rng: &mut ChaCha8Rng) -> CaseSpec {
    let mut offenses = vec![o];
    if o.name == "Theft" && rng.gen_bool(0.3) {
        offenses.push(offense("Fraud"));
    }
    CaseSpec {
        offenses,
        severity: rng.gen_range(0..3),
        surrendered: rng.gen_bool(0.25),
        recidivist: rng.gen_bool(0.15),
    }
}

/// Deterministic for a given seed.
pub fn generate(seed: u64) -> GoldenFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut articles: Vec<ArticleDocument> = OFFENSES
        .iter()
        .map(|o| (o.article_number, o.body))
        .chain(STANDALONE_ARTICLES.iter().map(|(n, _, b)| (*n, *b)))
        .map(|(number, body)| ArticleDocument {
            article_id: article_id(number),
            article_number: number.to_owned(),
            body_text: body.to_owned(),
            interpretation_ids: INTERPRETATIONS
                .iter()
                .filter(|(_, target, _)| *target == number)
                .map(|(id, _, _)| (*id).to_owned())
                .collect(),
        })
        .collect();
    articles.sort_by(|a, b| a.article_id.cmp(&b.article_id));
    let interpretations = INTERPRETATIONS
        .iter()
        .map(|(id, target, body)| InterpretationDocument {
            interpretation_id: (*id).to_owned(),
            body_text: (*body).to_owned(),
            target_article_ids: vec![article_id(target)],
        })
        .collect();

    let cases = (0..TRAIN_CASES)
        .map(|i| {
            let spec = random_spec(&OFFENSES[i % OFFENSES.len()], &mut rng);
            make_case(format!("C{:03}", i + 1), &spec, &mut rng)
        })
        .collect();

    let test_specs = [
        (vec!["Theft"], 1, true, false),
        (vec!["Fraud"], 2, false, false),
        (vec!["Robbery"], 1, false, true),
        (vec!["Intentional Injury"], 0, true, false),
        (vec!["Intentional Homicide"], 2, false, false),
        (vec!["Drug Trafficking"], 1, false, false),
        (vec!["Dangerous Driving"], 0, false, false),
        (vec!["Embezzlement"], 2, true, false),
        (vec!["Forcible Seizure"], 0, false, false),
        (vec!["Theft", "Fraud"], 1, false, false),
    ];
    let test_cases = test_specs
        .into_iter()
        .enumerate()
        .map(|(i, (names, severity, surrendered, recidivist))| {
            let spec = CaseSpec {
                offenses: names.into_iter().map(offense).collect(),
                severity,
                surrendered,
                recidivist,
            };
            make_case(format!("T{:02}", i + 1), &spec, &mut rng)
        })
        .collect();

    GoldenFixture {
        bundle: CorpusBundle {
            cases,
            articles,
            interpretations,
        },
        test_cases,
    }
}

// ---- responder ----

/// What the stand-in model believes: cue word → (charge, article number).
/// Snatching is misread as robbery.
const BELIEFS: &[(&str, &str, &str)] = &[
    ("secretly", "Theft", "264"),
    ("deceived", "Fraud", "266"),
    ("force", "Robbery", "263"),
    ("snatched", "Robbery", "263"),
    ("attacked", "Intentional Injury", "234"),
    ("killed", "Intentional Homicide", "232"),
    ("narcotics", "Drug Trafficking", "347"),
    ("intoxicated", "Dangerous Driving", "133-1"),
    ("misappropriated", "Embezzlement", "271"),
    ("bribe", "Offering Bribes", "389"),
];

fn believed_charges(text: &str) -> Vec<(&'static str, &'static str)> {
    let mut out: Vec<(&str, &str)> = Vec::new();
    for (cue, charge, number) in BELIEFS {
        if text.contains(cue) && !out.iter().any(|(c, _)| c == charge) {
            out.push((charge, number));
        }
    }
    out
}

fn severity_of(text: &str) -> usize {
    if text.contains("especially serious") {
        2
    } else if text.contains("were serious") {
        1
    } else {
        0
    }
}

fn elements_for(number: &str) -> Option<Vec<&'static str>> {
    if number == "303" {
        return None;
    }
    OFFENSES
        .iter()
        .find(|o| o.article_number == number)
        .map(|o| o.elements.to_vec())
        .or_else(|| {
            STANDALONE_ARTICLES
                .iter()
                .find(|(n, _, _)| *n == number)
                .map(|(_, e, _)| vec![*e])
        })
}

fn after<'a>(text: &'a str, marker: &str) -> &'a str {
    text.find(marker).map_or("", |i| &text[i + marker.len()..])
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let rest = after(text, start);
    rest.find(end).map_or(rest, |i| &rest[..i])
}

fn article_number_in(law: &str) -> &str {
    let rest = after(law, "Article ");
    rest.split(':').next().unwrap_or("").trim()
}

fn quoted(item: &str) -> Option<&str> {
    let start = item.find('\'')? + 1;
    let len = item[start..].find('\'')?;
    Some(&item[start..start + len])
}

fn keywords(case: &str) -> String {
    let mut behaviors: Vec<&str> = Vec::new();
    for o in OFFENSES {
        for e in o.elements {
            if case.contains(e) && !behaviors.contains(e) {
                behaviors.push(e);
            }
        }
    }
    let mut attributes = Vec::new();
    if case.contains("previously") {
        attributes.push("recidivist");
    }
    if case.contains("surrendered") {
        attributes.push("surrendered voluntarily");
    }
    let victims: Vec<&str> = ["victim", "company", "buyer", "official"]
        .into_iter()
        .filter(|v| case.contains(v))
        .collect();
    let mental = if case.contains("deliberately") || case.contains("deceived") {
        vec!["direct intent"]
    } else {
        vec!["intent"]
    };
    serde_json::json!({
        "Defendant_Attributes": attributes,
        "Criminal_Behaviors": behaviors,
        "Victim_Characteristics": victims,
        "Subjective_Mental_States": mental,
    })
    .to_string()
}

fn summary(features: &str) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for line in features.lines() {
        let behaviors = between(line, "Criminal Behaviors: ", ";");
        for w in behaviors.split(", ").filter(|w| !w.is_empty()) {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let top: Vec<&str> = ranked.iter().take(3).map(|(w, _)| *w).collect();
    if top.is_empty() {
        "Cases with mixed conduct.".to_owned()
    } else {
        format!(
            "Cases whose conduct is characterised by: {}.",
            top.join(", ")
        )
    }
}

fn sentencing(user: &str) -> String {
    let context = between(user, "Context: ", ", Candidate charges: ");
    let case = after(user, ", Case: ");
    let beliefs = believed_charges(case);
    let charges: Vec<&str> = beliefs.iter().map(|(c, _)| *c).collect();
    let mut articles: Vec<&str> = beliefs.iter().map(|(_, n)| *n).collect();
    let severity = severity_of(case);
    let in_context = |n: &str| context.contains(&format!("Article {n}:"));
    let surrendered = case.contains("surrendered") && in_context("67");
    if surrendered {
        articles.push("67");
    }
    if case.contains("previously") && in_context("65") {
        articles.push("65");
    }
    let (mut death, mut life, mut months) = (false, false, 0u32);
    for (charge, _) in &beliefs {
        if *charge == "Intentional Homicide" && severity > 0 {
            life = true;
        } else if let Some(o) = OFFENSES.iter().find(|o| o.name == *charge) {
            months += o.base_months + 5 * severity as u32;
        }
    }
    if surrendered {
        months = months.saturating_sub(2).max(1);
    }
    if beliefs.is_empty() {
        death = false;
        months = 6;
    }
    serde_json::json!({
        "charge_name": charges,
        "law_article": articles,
        "term_of_imprisonment": {
            "death_penalty": death,
            "life_imprisonment": life,
            "imprisonment": if life { 0 } else { months },
        }
    })
    .to_string()
}

fn verdict(user: &str) -> String {
    let split = user.rfind(", Case: ").unwrap_or(user.len());
    let context = after(&user[..split], "Context: ");
    let case = &user[(split + ", Case: ".len()).min(user.len())..];
    let beliefs = believed_charges(case);
    if beliefs.is_empty() {
        return "The facts do not establish any offense.".to_owned();
    }
    let mut out = String::new();
    for (charge, number) in beliefs {
        let mut support: Vec<String> = Vec::new();
        for line in context.lines() {
            let Some(rest) = line.strip_prefix('[') else {
                continue;
            };
            let Some((n, text)) = rest.split_once("] ") else {
                continue;
            };
            if text.starts_with(&format!("Article {number}:")) || text.contains(charge) {
                support.push(format!("[{n}]"));
            }
        }
        out.push_str(&format!(
            "The defendant committed {charge} under Article {number}"
        ));
        if support.is_empty() {
            out.push_str(". ");
        } else {
            out.push_str(&format!(" {}. ", support.join("")));
        }
    }
    out.trim_end().to_owned()
}

/// Answers one request the way the fixture's stand-in model would.
pub fn respond(request: &ChatRequest) -> Result<String, LlmError> {
    let user = request.user.as_str();
    Ok(match request.template_id {
        TemplateId::KeywordExtraction => keywords(after(user, "Case: ")),
        TemplateId::ChargePrejudge => {
            let charges: Vec<&str> = believed_charges(after(user, "Case: "))
                .into_iter()
                .map(|(c, _)| c)
                .collect();
            serde_json::to_string(&charges).expect("strings serialize")
        }
        TemplateId::ChecklistGeneration => {
            let number = article_number_in(between(user, "law: ", ", related: "));
            match elements_for(number) {
                Some(elements) => {
                    let items: Vec<String> = elements
                        .iter()
                        .map(|e| format!("Do the facts establish the element '{e}'?"))
                        .collect();
                    serde_json::to_string(&items).expect("strings serialize")
                }
                None => "I cannot break this article into questions.".to_owned(),
            }
        }
        TemplateId::CommunitySummary => summary(after(user, "cases: ")),
        TemplateId::AuditorItem => {
            let element = between(user, "\nelement: ", ", case: ");
            let case = after(user, ", case: ");
            let holds = quoted(element).is_some_and(|e| case.contains(e));
            format!("Checking the element against the facts. <answer>{holds}</answer>")
        }
        TemplateId::AuditorFinal => {
            let true_list = between(user, "true_list: ", ", false_list: ");
            let false_list = after(user, ", false_list: ");
            let applicable = true_list != "[]" && false_list == "[]";
            format!("All elements considered. <answer>{applicable}</answer>")
        }
        TemplateId::SentencingJson => sentencing(user),
        TemplateId::Verdict => verdict(user),
    })
}

pub fn responder() -> FnBackend<fn(&ChatRequest) -> Result<String, LlmError>> {
    FnBackend::new(
        RESPONDER_NAME,
        respond as fn(&ChatRequest) -> Result<String, LlmError>,
    )
}

/// Builds the graph and evaluates the test cases once per `k`, recording
/// every exchange. Replaying the returned script reproduces those runs.
pub fn record_script(
    fixture: &GoldenFixture,
    provider: &dyn EmbeddingProvider,
    build: &BuildConfig,
    pipeline: &PipelineConfig,
    ks: &[usize],
) -> Result<(Script, HierarGraph), PipelineError> {
    let recorder = Arc::new(RecordingBackend::new(responder()));
    let gw = Gateway::new(Arc::clone(&recorder) as Arc<dyn ChatBackend>);
    let graph = build_hierargraph(&fixture.bundle, &gw, provider, build)?;
    let ks: BTreeSet<usize> = ks.iter().copied().chain([pipeline.research.k]).collect();
    for k in ks {
        let mut config = *pipeline;
        config.research.k = k;
        evaluate_cases(&gw, provider, &graph, &fixture.test_cases, &config)?;
    }
    Ok((recorder.script(), graph))
}
