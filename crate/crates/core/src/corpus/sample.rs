//! The Zoo Lake record: a three-document QA record used in docs, tests and
//! CLI smoke runs.

use super::text::tokenize;
use super::types::{KbStore, WikiHopRecord};

pub const ZOO_LAKE_DOC1: &str =
    "Zoo Lake is a popular lake and public park in Johannesburg , South Africa . \
It is part of the Hermann Eckstein Park and is opposite the Johannesburg Zoo . \
The Zoo Lake consists of two dams , an upper feeder dam , and a larger lower dam , \
both constructed in natural marshland watered by the Parktown Spruit .";

pub const ZOO_LAKE_DOC2: &str =
    "Johannesburg is the largest city in South Africa and is one of the 50 \
largest urban areas in the world . It is the provincial capital of Gauteng , \
which is the wealthiest province in South Africa .";

pub const ZOO_LAKE_DOC3: &str =
    "Mozambique is a country in Southeast Africa bordered by the Indian Ocean to \
the east , Tanzania to the north , Malawi and Zambia to the northwest , Zimbabwe to the west , \
and Swaziland and South Africa to the southwest .";

pub const ZOO_LAKE_RELATION: &str = "located_in_administrative_entity";

/// The record and a KB holding only its positive tuple.
pub fn zoo_lake_record() -> (WikiHopRecord, KbStore) {
    let mut kb = KbStore::new();
    let relation = kb.insert("zoo lake", ZOO_LAKE_RELATION, "gauteng");
    let supports = [
        ("doc1", ZOO_LAKE_DOC1),
        ("doc2", ZOO_LAKE_DOC2),
        ("doc3", ZOO_LAKE_DOC3),
    ]
    .iter()
    .map(|(id, text)| tokenize(id, text).expect("non-empty text"))
    .collect();
    let record = WikiHopRecord {
        id: "zoo-lake".into(),
        relation,
        subject: "zoo lake".into(),
        candidates: vec!["gauteng".into(), "tanzania".into()],
        answer: "gauteng".into(),
        supports,
    };
    (record, kb)
}
