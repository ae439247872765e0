//! Bundled sample data: a small pharmacology corpus, a worked clinical
//! verification instance, and a complete verifier transcript over it.
//!
//! These are the fixtures used throughout the examples and tests; nothing
//! here is required at runtime.

use crate::retrieval::Document;
use crate::rollout::VerificationInstance;

/// Five-document corpus. Exactly one document mentions both "cisplatin" and
/// "ototoxicity", which makes ranking assertions unambiguous.
pub fn mini_corpus() -> Vec<Document> {
    let docs = [
        (
            "onc-bladder",
            "Bladder cancer treatment",
            "Muscle-invasive transitional cell carcinoma of the bladder is typically managed \
             with cisplatin-based neoadjuvant chemotherapy before cystectomy.",
        ),
        (
            "pharm-bortezomib",
            "Proteasome inhibitors",
            "Bortezomib inhibits the 26S proteasome and is used in multiple myeloma; peripheral \
             neuropathy is its characteristic toxicity.",
        ),
        (
            "pharm-cisplatin",
            "Cisplatin toxicity profile",
            "Cisplatin forms intrastrand DNA cross-links. Dose-limiting toxicities include \
             ototoxicity with tinnitus and sensorineural hearing loss, nephrotoxicity, and \
             severe nausea.",
        ),
        (
            "pharm-cyclophosphamide",
            "Alkylating agents",
            "Cyclophosphamide cross-links DNA and can cause hemorrhagic cystitis, prevented \
             with mesna.",
        ),
        (
            "pharm-taxane",
            "Taxanes",
            "Paclitaxel and docetaxel hyperstabilize microtubules, arresting mitosis; they \
             commonly cause peripheral neuropathy and myelosuppression.",
        ),
    ];
    docs.into_iter()
        .map(|(id, title, text)| Document {
            id: id.to_string(),
            title: title.to_string(),
            text: text.to_string(),
        })
        .collect()
}

/// A clinical verification instance: a question, a generator's reasoning
/// trace that contains a planted error (it attributes the ototoxicity to
/// taxanes instead of cisplatin), and the gold trace-level label 0.
pub fn clinical_instance() -> VerificationInstance {
    VerificationInstance {
        instance_id: "clinical-ototoxicity".to_string(),
        question: "A 67-year-old man with transitional cell carcinoma of the bladder comes to \
                   the physician because of a 2-day history of ringing sensation in his ear. He \
                   received his first course of neoadjuvant chemotherapy 1 week ago. Pure tone \
                   audiometry shows a sensorineural hearing loss of 45 dB. The expected \
                   beneficial effect of the drug that caused this patient's symptoms is most \
                   likely due to which of the following actions?\nOptions:\n(A) Inhibition of \
                   proteasome (B) Hyperstabilization of microtubules (C) Generation of free \
                   radicals (D) Cross-linking of DNA"
            .to_string(),
        trace_steps: vec![
            "The patient's presentation of ringing in the ear and a sensorineural hearing loss \
             of 45 dB suggest ototoxicity, a known side effect of certain chemotherapy drugs."
                .to_string(),
            "Option (B), hyperstabilization of microtubules, is the mechanism of taxanes, and \
             taxanes are known to cause ototoxicity, making this a strong candidate."
                .to_string(),
            "Therefore the drug that most likely caused this patient's symptoms is one that \
             hyperstabilizes microtubules. The answer is (B)."
                .to_string(),
        ],
        gold_label: 0,
    }
}

/// A complete verifier transcript for [`clinical_instance`]: think, one
/// search turn with retrieved information, a second think, and the final
/// judgment 0. Segment order is [Think, Search, Information, Think, Answer].
pub fn clinical_transcript() -> &'static str {
    "<think>\nLet's check the common chemotherapeutic agents used for bladder cancer and their \
     known side effects.\nTransitional cell carcinoma of the bladder is often treated with \
     cisplatin-based chemotherapy as neoadjuvant therapy.\nWe need to determine if any of the \
     options match the known side effects of these drugs.\nLet's search to confirm the side \
     effects of cisplatin and other common bladder cancer chemotherapy drugs.\n</think>\n\n\
     <search>\ncommon side effects of cisplatin chemotherapy </search>\n\n\
     <information>\n[1] Cisplatin toxicity profile: Cisplatin forms intrastrand DNA cross-links. \
     Dose-limiting toxicities include ototoxicity with tinnitus and sensorineural hearing loss, \
     nephrotoxicity, and severe nausea.\n</information>\n\n\
     <think>\nFrom the information, cisplatin is known to cause ototoxicity, which aligns with \
     the patient's symptoms of sensorineural hearing loss. Now let's check the mechanisms of \
     action for the options:\nOption (A): Inhibition of proteasome - associated with bortezomib \
     and not used for bladder cancer.\nOption (B): Hyperstabilization of microtubules - the \
     mechanism of taxanes such as paclitaxel and docetaxel.\nOption (C): Generation of free \
     radicals - not specific to a single agent here.\nOption (D): Cross-linking of DNA - the \
     mechanism of alkylating-type agents.\nCisplatin acts by cross-linking DNA, so the reasoning \
     trace attributing the symptoms to microtubule hyperstabilization is wrong.\nTherefore the \
     correct answer should be (D), and the trace concluded (B).\n</think>\n\n\
     <answer>0</answer>"
}
