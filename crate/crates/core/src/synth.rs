//! Seeded generators for the bundled fixtures and for scale runs.
//!
//! Every generator is a pure function of its seed (and index), so fixture
//! files can be regenerated and checked byte for byte.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::cleaner::NoiseCategory;
use crate::corpus::{Conversation, Speaker};

pub const DEMO_SEED: u64 = 20231024;
pub const DEMO_CONVERSATIONS: usize = 50;
pub const DEMO_DOCTOR_TURNS: usize = 10;
/// Question turns in the demo fixture: 231 of 500 doctor turns.
pub const DEMO_QUESTIONS: usize = 231;

const SUBJECTS: &[&str] = &["宝宝", "孩子", "我", "我妈妈", "我老公", "我爸"];
const SYMPTOMS: &[&str] = &[
    "咳嗽", "发烧", "拉肚子", "头疼", "嗓子疼", "肚子疼", "流鼻涕", "起湿疹", "胃胀", "失眠",
];
const DURATIONS: &[&str] = &["一天", "两天", "三天", "一个星期", "半个月", "好几天"];
const OPENING_EXTRAS: &[&str] = &[
    "晚上比较厉害",
    "吃了药也没见好",
    "精神还可以",
    "不太想吃东西",
    "有点担心",
    "昨天开始加重",
];

/// Doctor questions. All carry a question mark; the half-width ones are
/// widened by ingest.
pub const QUESTIONS: &[&str] = &[
    "这种情况持续多久了？",
    "有没有发烧?",
    "痰是什么颜色的？",
    "晚上咳得厉害吗？",
    "平时有没有过敏史？",
    "之前吃过什么药?",
    "大便的情况怎么样？",
    "精神状态还好吗？",
    "体温最高到多少度？",
    "有没有呕吐的情况？",
    "疼痛是哪个位置?",
    "睡眠受影响吗？",
];

/// Doctor suggestions. None is classified as a question.
pub const SUGGESTIONS: &[&str] = &[
    "建议多喝温水，注意休息。",
    "可以先口服止咳药物观察两天。",
    "饮食清淡一些，避免辛辣刺激的食物。",
    "如果持续高烧不退，需要及时到医院就诊。",
    "注意保暖，保持室内空气流通。",
    "可以去医院做个血常规检查明确一下。",
    "这种情况考虑是上呼吸道感染引起的。",
    "按时服药，三天后复诊。",
    "可以用温水擦浴帮助物理降温。",
    "少量多次补充口服补液盐，防止脱水。",
];

const PATIENT_ANSWERS: &[&str] = &[
    "三天左右",
    "没有发烧",
    "有一点痰，白色的",
    "晚上咳得多一些",
    "没有过敏史",
    "吃了点止咳糖浆",
    "大便有点稀",
    "精神还行",
    "最高三十八度五",
    "吐过一次",
    "肚脐周围",
    "睡得不太好",
];

const PATIENT_ACKS: &[&str] = &[
    "好的，谢谢医生",
    "明白了",
    "那需要去医院吗",
    "好的我试试",
    "还要注意什么",
    "知道了，谢谢",
];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.random_range(0..pool.len())]
}

fn opening(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{}{}{}了，{}",
        pick(rng, SUBJECTS),
        pick(rng, SYMPTOMS),
        pick(rng, DURATIONS),
        pick(rng, OPENING_EXTRAS)
    )
}

/// Question turns for each demo conversation: 31 conversations ask five
/// questions and 19 ask four.
pub fn demo_question_counts() -> Vec<usize> {
    (0..DEMO_CONVERSATIONS).map(|i| if i < 31 { 5 } else { 4 }).collect()
}

/// The 50-conversation demo corpus in the `meddg` record shape. Each
/// conversation has ten doctor turns; the first few are questions and the
/// rest are suggestions.
pub fn demo_records(seed: u64) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records: Vec<Value> = demo_question_counts()
        .into_iter()
        .enumerate()
        .map(|(i, n_questions)| {
            let mut dialogue = Vec::with_capacity(2 * DEMO_DOCTOR_TURNS);
            let mut patient = opening(&mut rng);
            for turn in 0..DEMO_DOCTOR_TURNS {
                dialogue.push(json!({"id": "Patients", "Sentence": patient}));
                let (doctor, next) = if turn < n_questions {
                    let q = rng.random_range(0..QUESTIONS.len());
                    (QUESTIONS[q], PATIENT_ANSWERS[q].to_string())
                } else {
                    (pick(&mut rng, SUGGESTIONS), pick(&mut rng, PATIENT_ACKS).to_string())
                };
                dialogue.push(json!({"id": "Doctor", "Sentence": doctor}));
                patient = next;
            }
            json!({"id": format!("demo-{i:03}"), "dialogue": dialogue})
        })
        .collect();
    Value::Array(records)
}

/// Bytes of the bundled demo fixture file.
pub fn demo_fixture_text(seed: u64) -> String {
    let mut s = serde_json::to_string_pretty(&demo_records(seed)).expect("serializable");
    s.push('\n');
    s
}

/// Noise exemplars, at least two per category. Each is removable by the
/// default rules when appended to a doctor turn.
pub const NOISE_EXEMPLARS: &[(NoiseCategory, &str)] = &[
    (NoiseCategory::MissingContent, "该消息已撤回"),
    (NoiseCategory::MissingContent, "回复仅对提问者可见"),
    (NoiseCategory::MissingContent, "（以下内容已折叠）"),
    (NoiseCategory::Image, "[图片]"),
    (NoiseCategory::Image, "<img src=\"a.jpg\">"),
    (NoiseCategory::Image, "患者上传了3张图片"),
    (NoiseCategory::Image, "IMG_2031.jpg"),
    (NoiseCategory::Reward, "送出了心意礼物 ¥5"),
    (NoiseCategory::Reward, "感谢您的打赏"),
    (NoiseCategory::Reward, "获得10积分"),
    (NoiseCategory::Privacy, "我的电话13812345678"),
    (NoiseCategory::Privacy, "微信号：abc_12345"),
    (NoiseCategory::Privacy, "身份证号110101199003071234"),
    (NoiseCategory::Privacy, "邮箱test@example.com"),
    (NoiseCategory::BrokenJson, "{\"text\": \""),
    (NoiseCategory::BrokenJson, "\"}],"),
    (NoiseCategory::BrokenJson, "\\u4f60"),
    (NoiseCategory::Link, "https://www.haodf.com/doctor/123.html"),
    (NoiseCategory::Link, "www.example.cn"),
    (NoiseCategory::Link, "<a href=\"x\">点击</a>"),
    (NoiseCategory::SiteTip, "温馨提示：本回复仅供参考。"),
    (NoiseCategory::SiteTip, "请对本次服务进行评价！"),
    (NoiseCategory::SiteTip, "下载好大夫APP查看更多。"),
    (NoiseCategory::SiteTip, "点击这里追问医生"),
    (NoiseCategory::VoiceRecording, "[语音] 12秒"),
    (NoiseCategory::VoiceRecording, "发送了一条语音"),
    (NoiseCategory::VoiceRecording, "语音转文字失败："),
    (NoiseCategory::AutoReply, "自动回复：医生正在手术中，请稍后。"),
    (NoiseCategory::AutoReply, "已收到您的问题，医生会尽快回复。"),
    (NoiseCategory::AutoReply, "请耐心等待医生回复。"),
];

/// Short clean conversation with three doctor turns.
fn clean_conversation(rng: &mut ChaCha8Rng, id: String, meta: BTreeMap<String, String>) -> Conversation {
    let q = rng.random_range(0..QUESTIONS.len());
    let turns = [
        (Speaker::Patient, opening(rng)),
        (Speaker::Doctor, QUESTIONS[q].replace('?', "？")),
        (Speaker::Patient, PATIENT_ANSWERS[q].to_string()),
        (Speaker::Doctor, pick(rng, SUGGESTIONS).to_string()),
        (Speaker::Patient, pick(rng, PATIENT_ACKS).to_string()),
        (Speaker::Doctor, pick(rng, SUGGESTIONS).to_string()),
    ];
    Conversation::assemble(id, "synthetic", turns, meta).expect("generated turns alternate")
}

fn with_text(conv: &Conversation, index: usize, text: &str) -> Conversation {
    let mut out = conv.clone();
    out.replace_text(index, text).expect("non-empty text");
    out
}

/// One conversation per exemplar, the exemplar appended to the middle
/// doctor turn. `meta` records the category and exemplar.
pub fn noise_exemplar_corpus(seed: u64) -> Vec<Conversation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NOISE_EXEMPLARS
        .iter()
        .enumerate()
        .map(|(i, (category, exemplar))| {
            let category = serde_json::to_value(category)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .expect("category name");
            let meta = BTreeMap::from([
                ("category".to_string(), category),
                ("exemplar".to_string(), exemplar.to_string()),
            ]);
            let base = clean_conversation(&mut rng, format!("noise-{i:02}"), meta);
            let host = base.utterances()[3].text();
            with_text(&base, 3, &format!("{host}{exemplar}"))
        })
        .collect()
}

/// Encoding damage the rules cannot repair.
pub const RESIDUAL_EXEMPLARS: &[&str] = &["锟斤拷锟斤拷", "\u{FFFD}\u{FFFD}", "烫烫烫烫", "????"];

/// `n` conversations of which the first `cleanable` carry one removable
/// exemplar and the next `residual` carry encoding damage, then shuffled
/// deterministically. Expected excellent rate goes from
/// `(n - cleanable - residual) / n` to `(n - residual) / n`.
pub fn quality_corpus(seed: u64, n: usize, cleanable: usize, residual: usize) -> Vec<Conversation> {
    assert!(cleanable + residual <= n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Conversation> = (0..n)
        .map(|i| {
            let base = clean_conversation(&mut rng, format!("quality-{i:03}"), BTreeMap::new());
            if i < cleanable {
                let (_, exemplar) = NOISE_EXEMPLARS[rng.random_range(0..NOISE_EXEMPLARS.len())];
                let host = base.utterances()[3].text().to_string();
                with_text(&base, 3, &format!("{host}{exemplar}"))
            } else if i < cleanable + residual {
                let damage = RESIDUAL_EXEMPLARS[rng.random_range(0..RESIDUAL_EXEMPLARS.len())];
                let host = base.utterances()[1].text().to_string();
                with_text(&base, 1, &format!("{damage}{host}"))
            } else {
                base
            }
        })
        .collect();
    // Fisher-Yates with the same stream keeps the order reproducible.
    for i in (1..out.len()).rev() {
        let j = rng.random_range(0..=i);
        out.swap(i, j);
    }
    out
}

/// Conversation `index` of an unbounded synthetic stream. Every tenth one
/// carries a removable exemplar and every 97th is dropped by cleaning.
pub fn scale_conversation(seed: u64, index: u64) -> Conversation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let base = clean_conversation(&mut rng, format!("scale-{index:07}"), BTreeMap::new());
    if index % 97 == 0 {
        // Voice-only doctor reply: cleaning empties it and the
        // conversation is dropped.
        let turns = [
            (Speaker::Patient, base.utterances()[0].text().to_string()),
            (Speaker::Doctor, "[语音] 30秒".to_string()),
        ];
        return Conversation::assemble(base.id(), base.source(), turns, BTreeMap::new())
            .expect("valid before cleaning");
    }
    if index % 10 == 0 {
        let (_, exemplar) = NOISE_EXEMPLARS[(index / 10) as usize % NOISE_EXEMPLARS.len()];
        let host = base.utterances()[3].text().to_string();
        return with_text(&base, 3, &format!("{host}{exemplar}"));
    }
    base
}

/// Lazily generated stream of `n` scale conversations.
pub fn scale_stream(seed: u64, n: u64) -> impl Iterator<Item = Conversation> {
    (0..n).map(move |i| scale_conversation(seed, i))
}
