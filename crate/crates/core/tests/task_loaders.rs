//! Loader tests over hand-built fixtures in each dataset's native layout.

use convprobe::corpus::{
    build_vocabulary, tokenize, Conversation, DialogCorpus, Ordering, SizeClass, Split,
    Vocabulary,
};
use convprobe::tasks::*;
use std::path::Path;

fn vocab() -> Vocabulary {
    let text = "why do heavier objects travel downhill faster i go to college part time you are \
                a recent graduate looking for job need book hotel can help with that what is your \
                price range doesn't matter as long it has free wifi and parking me find restaurant \
                which city in cupertino please want see outcast john couldn't the stage billy \
                front of him because he so tall thank coming officer seems be problem was school \
                all day came home burglarized apartment think yoga suitable doesn't require lot \
                energy but people sweat doing too this weather nice today love music play guitar \
                my favorite food pizza work at office every morning run";
    build_vocabulary([text], 1, 10_000, SizeClass::Small).unwrap()
}

fn write(path: &Path, content: &str) {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).unwrap();
    }
    std::fs::write(path, content).unwrap();
}

#[test]
fn trec_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let v = vocab();
    // tiny closed inventory; enough rows that the valid carve leaves all
    // classes in train
    let mut train_lines = String::new();
    for i in 0..10 {
        train_lines.push_str(&format!("DESC:manner Why do heavier objects travel downhill faster {i}?\n"));
        train_lines.push_str(&format!("NUM:count How much is it {i}?\n"));
        train_lines.push_str(&format!("LOC:city Which city {i}?\n"));
    }
    write(&dir.path().join("train_5500.label"), &train_lines);
    write(
        &dir.path().join("TREC_10.label"),
        "DESC:manner Why do heavier objects travel downhill faster?\nNUM:count How much?\n",
    );
    let task = load_trec(dir.path(), &v).unwrap();
    assert_eq!(task.class_names, vec!["desc", "loc", "num"]);
    // single-utterance task: every history is empty
    for ex in task.train.iter().chain(&task.valid).chain(&task.test) {
        assert!(ex.history.is_empty());
    }
    // the published example maps to the description class
    let desc_id = task.class_names.iter().position(|c| c == "desc").unwrap() as u32;
    assert_eq!(task.test[0].label, desc_id);
    assert!(task.test[0].current.raw_text.contains("heavier objects"));
    task.check_invariants().unwrap();
}

#[test]
fn trec_unknown_label_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let v = vocab();
    write(&dir.path().join("train_5500.label"), "badlabel what is this?\n");
    write(&dir.path().join("TREC_10.label"), "DESC:x why?\n");
    assert!(matches!(load_trec(dir.path(), &v), Err(TaskError::UnknownLabel { .. })));
}

#[test]
fn dnli_fixture_transforms_hypothesis() {
    let dir = tempfile::tempdir().unwrap();
    let v = vocab();
    let mk = |s1: &str, s2: &str, label: &str| {
        format!("{{\"sentence1\": {s1:?}, \"sentence2\": {s2:?}, \"label\": {label:?}}}\n")
    };
    let mut train = String::new();
    for i in 0..8 {
        train.push_str(&mk(&format!("i go to college part time {i}."), "i am a recent college graduate looking for a job.", "negative"));
        train.push_str(&mk(&format!("i love pizza {i}."), "i love food.", "positive"));
        train.push_str(&mk(&format!("i play guitar {i}."), "the weather is nice.", "neutral"));
    }
    write(&dir.path().join("dialogue_nli_train.jsonl"), &train);
    write(
        &dir.path().join("dialogue_nli_dev.jsonl"),
        &mk("i work at the office.", "i am busy.", "positive"),
    );
    // one record with a missing label must be skipped and counted
    write(
        &dir.path().join("dialogue_nli_test.jsonl"),
        &format!(
            "{}{}",
            mk("I go to college part time.", "i am a recent college graduate looking for a job.", "negative"),
            "{\"sentence1\": \"x\", \"sentence2\": \"y\", \"label\": null}\n"
        ),
    );
    let task = load_dnli(dir.path(), &v).unwrap();
    assert_eq!(task.class_names, vec!["contradict", "entail", "neutral"]);
    assert_eq!(task.skipped, 1);
    let contradict = 0u32;
    let ex = &task.test[0];
    assert_eq!(ex.label, contradict);
    assert_eq!(ex.history.len(), 1);
    // the first-person hypothesis was rewritten to second person
    assert_eq!(ex.current.raw_text, "you are a recent college graduate looking for a job.");
}

#[test]
fn multiwoz_fixture_first_act_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let v = vocab();
    let dialog = |acts: &str| {
        format!(
            r#"{{"log": [
              {{"text": "I need to book a hotel.", "dialog_act": {{"Hotel-Inform": [["none", "none"]]}}}},
              {{"text": "I can help you with that. What is your price range?", "dialog_act": {{}}}},
              {{"text": "That doesn't matter as long as it has free wifi and parking.", "dialog_act": {acts}}}
            ]}}"#
        )
    };
    // multi-act turn: the first listed act wins
    let data = format!(
        r#"{{
          "MUL001.json": {},
          "MUL002.json": {},
          "MUL003.json": {},
          "MUL004.json": {}
        }}"#,
        dialog(r#"{"Hotel-Inform": [["wifi", "yes"]], "General-Thank": [["none", "none"]]}"#),
        dialog(r#"{"Hotel-Inform": [["parking", "yes"]]}"#),
        dialog(r#"{"Hotel-Inform": [["price", "cheap"]]}"#),
        dialog(r#"{"Hotel-Inform": [["area", "north"]]}"#),
    );
    write(&dir.path().join("data.json"), &data);
    write(&dir.path().join("valListFile.txt"), "MUL003.json\n");
    write(&dir.path().join("testListFile.txt"), "MUL004.json\n");

    let task = load_multiwoz(dir.path(), &v).unwrap();
    assert!(task.class_names.contains(&"hotel-inform".to_string()));
    let hotel_inform =
        task.class_names.iter().position(|c| c == "hotel-inform").unwrap() as u32;
    // the 3-turn fixture ends at the wifi/parking turn with label hotel-inform
    let ex = task
        .test
        .iter()
        .find(|e| e.current.raw_text.contains("free wifi and parking"))
        .expect("fixture example present");
    assert_eq!(ex.label, hotel_inform);
    assert_eq!(ex.history.len(), 2);
    assert_eq!(ex.history[0].raw_text, "I need to book a hotel.");
    // first human turn has no preceding turns
    let first = task.test.iter().find(|e| e.history.is_empty()).unwrap();
    assert_eq!(first.current.raw_text, "I need to book a hotel.");
}

#[test]
fn sgd_fixture_intent_persistence_and_none_skipping() {
    let dir = tempfile::tempdir().unwrap();
    let v = vocab();
    let dialogues = r#"[
      {
        "dialogue_id": "1_00000",
        "turns": [
          {"speaker": "USER", "utterance": "Help me find a restaurant.",
           "frames": [{"state": {"active_intent": "FindRestaurant"}}]},
          {"speaker": "SYSTEM", "utterance": "Which city are you looking in?", "frames": []},
          {"speaker": "USER", "utterance": "Cupertino, please.",
           "frames": [{"state": {"active_intent": "FindRestaurant"}}]},
          {"speaker": "SYSTEM", "utterance": "Done.", "frames": []},
          {"speaker": "USER", "utterance": "Thank you!",
           "frames": [{"state": {"active_intent": "NONE"}}]}
        ]
      }
    ]"#;
    for split in ["train", "dev", "test"] {
        write(&dir.path().join(split).join("dialogues_001.json"), dialogues);
        write(
            &dir.path().join(split).join("schema.json"),
            r#"[{"service_name": "Restaurants_1", "intents": [{"name": "FindRestaurant"}]}]"#,
        );
    }
    let task = load_sgd(dir.path(), &v).unwrap();
    assert_eq!(task.class_names, vec!["find-restaurant"]);
    // NONE turns skipped (one per split)
    assert_eq!(task.skipped, 3);
    // intent persists across consecutive user turns of one transaction
    assert_eq!(task.train.len(), 2);
    assert_eq!(task.train[0].label, task.train[1].label);
    let ex = &task.train[1];
    assert_eq!(ex.current.raw_text, "Cupertino, please.");
    assert_eq!(ex.history.len(), 2);
    assert_eq!(ex.history[0].raw_text, "Help me find a restaurant.");
}

#[test]
fn snips_fixture_seven_intents() {
    let dir = tempfile::tempdir().unwrap();
    let v = vocab();
    let intents = [
        "AddToPlaylist",
        "BookRestaurant",
        "GetWeather",
        "PlayMusic",
        "RateBook",
        "SearchCreativeWork",
        "SearchScreeningEvent",
    ];
    for intent in intents {
        let query = |text: &str| {
            format!(r#"{{"{intent}": [{{"data": [{{"text": {text:?}}}]}}]}}"#)
        };
        let mut train_entries = format!("{{\"{intent}\": [");
        for i in 0..12 {
            if i > 0 {
                train_entries.push(',');
            }
            train_entries.push_str(&format!(
                r#"{{"data": [{{"text": "sample {i} for "}}, {{"text": "{intent}", "entity": "thing"}}]}}"#
            ));
        }
        train_entries.push_str("]}");
        write(
            &dir.path().join(intent).join(format!("train_{intent}_full.json")),
            &train_entries,
        );
        write(
            &dir.path().join(intent).join(format!("validate_{intent}.json")),
            &query(if intent == "SearchScreeningEvent" { "I want to see Outcast." } else { "test query" }),
        );
    }
    let task = load_snips(dir.path(), &v).unwrap();
    assert_eq!(task.class_names.len(), 7);
    for ex in task.train.iter().chain(&task.test) {
        assert!(ex.history.is_empty());
    }
    let screening =
        task.class_names.iter().position(|c| c == "search-screening-event").unwrap() as u32;
    let ex = task.test.iter().find(|e| e.current.raw_text.contains("Outcast")).unwrap();
    assert_eq!(ex.label, screening);
}

#[test]
fn wnli_fixture_two_speaker_pair() {
    let dir = tempfile::tempdir().unwrap();
    let v = vocab();
    let mut train = String::from("index\tsentence1\tsentence2\tlabel\n");
    for i in 0..12 {
        train.push_str(&format!("{i}\tThe dog chased the cat {i}.\tThe cat ran {i}.\t1\n"));
        train.push_str(&format!("{}\tThe dog slept {i}.\tThe dog ran {i}.\t0\n", i + 100));
    }
    write(&dir.path().join("train.tsv"), &train);
    write(
        &dir.path().join("dev.tsv"),
        "index\tsentence1\tsentence2\tlabel\n0\tJohn couldn't see the stage with Billy in front of him because he is so tall.\tJohn is so tall.\t0\n",
    );
    let task = load_wnli(dir.path(), &v).unwrap();
    assert_eq!(task.class_names, vec!["contradict", "entail"]);
    let ex = &task.test[0];
    assert_eq!(ex.label, 0, "the published pair is a contradiction");
    assert_eq!(ex.history.len(), 1, "premise is framed as the other speaker's turn");
    assert!(ex.history[0].raw_text.contains("Billy"));
    assert_eq!(ex.current.raw_text, "John is so tall.");
}

#[test]
fn scenariosa_fixture_sentiment_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let v = vocab();
    for i in 0..20 {
        write(
            &dir.path().join(format!("{i}.txt")),
            &format!(
                "A: Thank you for coming, officer {i}. 0\n\
                 B: What seems to be the problem {i}? 0\n\
                 A: I was in school all day and came home to a burglarized apartment {i}. -1\n\
                 B: That is good news {i}! 1\n"
            ),
        );
    }
    let task = load_scenariosa(dir.path(), &v).unwrap();
    assert_eq!(task.class_names, vec!["negative", "neutral", "positive"]);
    let negative = 0u32;
    let ex = task
        .train
        .iter()
        .find(|e| e.current.raw_text.contains("burglarized"))
        .expect("fixture turn present");
    assert_eq!(ex.label, negative);
    assert_eq!(ex.history.len(), 2);
    // first turn of each dialog has empty history
    assert!(task.train.iter().any(|e| e.history.is_empty()));
    task.check_invariants().unwrap();
}

#[test]
fn topic_fixture_conversation_level() {
    let v = vocab();
    let topics = ["ordinary life", "work", "health", "tourism"];
    let conversations: Vec<Conversation> = (0..40)
        .map(|i| Conversation {
            id: format!("c{i}"),
            utterances: vec![
                tokenize(&format!("I think Yoga is suitable for me {i}."), &v).unwrap(),
                tokenize("Why?", &v).unwrap(),
                tokenize("Because it doesn't require a lot of energy.", &v).unwrap(),
                tokenize("But I see people sweat a lot doing Yoga too.", &v).unwrap(),
            ],
            conv_label: Some(topics[i % topics.len()].to_string()),
            turn_labels: None,
        })
        .collect();
    let corpus = DialogCorpus {
        split: Split::Test,
        conversations,
        source_id: "dd".into(),
        ordering: Ordering::Ordered,
        shuffle_seed: None,
    };
    let task = load_dd_topic(&corpus, &v).unwrap();
    assert_eq!(task.class_names.len(), 4);
    assert_eq!(task.granularity, Granularity::Conversation);
    // 80/10/10 split of 40 conversations
    assert_eq!(task.train.len(), 32);
    assert_eq!(task.valid.len(), 4);
    assert_eq!(task.test.len(), 4);
    // history = everything but the last utterance
    for ex in &task.train {
        assert_eq!(ex.history.len(), 3);
        assert!(ex.current.raw_text.contains("sweat"));
    }
}

#[test]
fn normalized_round_trip_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let v = vocab();
    let mut train = String::from("index\tsentence1\tsentence2\tlabel\n");
    for i in 0..12 {
        train.push_str(&format!("{i}\tThe dog chased the cat {i}.\tThe cat ran {i}.\t1\n"));
        train.push_str(&format!("{}\tThe dog slept {i}.\tThe dog ran {i}.\t0\n", i + 100));
    }
    write(&dir.path().join("train.tsv"), &train);
    write(&dir.path().join("dev.tsv"), "index\ts1\ts2\tlabel\n0\tThe dog ran.\tThe cat ran.\t1\n");
    let task = load_wnli(dir.path(), &v).unwrap();

    let out1 = tempfile::tempdir().unwrap();
    save_probe_task(&task, out1.path()).unwrap();
    let loaded = load_probe_task(out1.path(), &v).unwrap();
    assert_eq!(loaded.class_names, task.class_names);
    assert_eq!(loaded.train.len(), task.train.len());
    assert_eq!(loaded.test[0].current.raw_text, task.test[0].current.raw_text);

    // saving again produces byte-identical files
    let out2 = tempfile::tempdir().unwrap();
    save_probe_task(&loaded, out2.path()).unwrap();
    for name in ["train.jsonl", "valid.jsonl", "test.jsonl", "labels.json"] {
        let a = std::fs::read(out1.path().join(name)).unwrap();
        let b = std::fs::read(out2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across round trips");
    }
}
