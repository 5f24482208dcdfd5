//! Seeded synthetic danmaku corpus with known ground truth.
//!
//! Benign bullets are built from everyday danmaku phrases; low-quality ones
//! additionally contain at least one insult marker. A configurable fraction
//! of distinct contents gets its label flipped, and a fraction of bullets
//! repeat earlier contents the way real danmaku streams do.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Bullet, DanmakuFile, DisplayBullet, DisplayMode};
use crate::preprocess::Label;

pub const BENIGN_WORDS: &[&str] = &[
    "哈哈哈", "前方高能", "好看", "好听", "感动", "厉害", "太强了", "支持", "加油", "喜欢",
    "主播", "视频", "音乐", "可爱", "漂亮", "帅气", "经典", "回忆", "青春", "泪目", "打卡",
    "来了", "第一次", "看到", "这里", "真的", "好笑", "名场面", "剧情", "演技", "画面", "特效",
    "弹幕护体", "全体起立", "预警", "开心", "快乐", "谢谢", "字幕组", "辛苦了", "期待",
    "下一集", "更新", "追番", "老师", "学到了", "原来如此", "有道理", "同意", "神仙", "操作",
    "技术", "细节", "伏笔", "结局", "男主", "女主", "配音", "背景", "好燃", "热血", "温柔",
    "治愈", "舒服", "安静", "夏天", "晚上", "周末", "大家", "朋友", "一起", "今天", "天气",
    "不错", "推荐", "收藏", "投币", "三连", "点赞", "关注", "up主", "二刷", "笑死", "绝了",
    "爷青回", "冲冲冲", "好家伙", "真香", "太好了", "好美", "画质", "歌词", "旋律", "声音",
    "好甜", "心疼", "致敬", "永远", "封神", "晚安", "早上好", "前排", "围观", "路过",
];

pub const OFFENSIVE_WORDS: &[&str] = &[
    "垃圾", "傻瓜", "白痴", "脑残", "废物", "滚出去", "恶心", "智障", "去死", "蠢货", "闭嘴",
    "丢人", "弱智", "狗东西", "有病", "神经病", "差劲", "烂片", "无脑", "恶臭",
];

const FILLERS: &[&str] = &["的", "了", "啊", "吧", "呢", "呀"];
const TAILS: &[&str] = &["233", "666", "2333", "hhh", "awsl", "yyds", "!", "！！", "？", "~"];

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("corpus size must be at least 10, got {0}")]
    TooSmall(usize),
    #[error("rate {name} must lie in [0, 1), got {value}")]
    BadRate { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub size: usize,
    pub seed: u64,
    /// Fraction of distinct contents whose label is flipped.
    pub label_noise: f64,
    /// Fraction of bullets that repeat an earlier content verbatim.
    pub duplicate_rate: f64,
}

impl SynthConfig {
    pub fn new(size: usize, seed: u64) -> Self {
        Self {
            size,
            seed,
            label_noise: 0.05,
            duplicate_rate: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub bullets: Vec<Bullet>,
    /// One entry per distinct content, in first-occurrence order.
    pub labels: Vec<(String, Label)>,
    /// Label before noise, aligned with `labels`.
    pub clean_labels: Vec<Label>,
}

impl SynthCorpus {
    pub fn noisy_count(&self) -> usize {
        self.labels
            .iter()
            .zip(&self.clean_labels)
            .filter(|((_, l), c)| l != *c)
            .count()
    }
}

/// Builds one content string of the requested class.
pub fn compose<R: Rng + ?Sized>(class: Label, rng: &mut R) -> String {
    let n_benign = match class {
        Label::Positive => rng.random_range(2..=4),
        Label::Negative => rng.random_range(1..=3),
    };
    let mut words: Vec<&str> = (0..n_benign)
        .map(|_| *BENIGN_WORDS.choose(rng).expect("non-empty pool"))
        .collect();
    if class == Label::Negative {
        let n_markers = if rng.random_bool(0.2) { 2 } else { 1 };
        for _ in 0..n_markers {
            let at = rng.random_range(0..=words.len());
            words.insert(at, OFFENSIVE_WORDS.choose(rng).expect("non-empty pool"));
        }
    }
    let mut out = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 && rng.random_bool(0.3) {
            out.push_str(FILLERS.choose(rng).expect("non-empty pool"));
        }
        out.push_str(w);
    }
    if rng.random_bool(0.25) {
        out.push_str(TAILS.choose(rng).expect("non-empty pool"));
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    if cfg.size < 10 {
        return Err(SynthError::TooSmall(cfg.size));
    }
    for (name, value) in [("label_noise", cfg.label_noise), ("duplicate_rate", cfg.duplicate_rate)] {
        if !(0.0..1.0).contains(&value) {
            return Err(SynthError::BadRate { name, value });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut bullets = Vec::with_capacity(cfg.size);
    let mut labels: Vec<(String, Label)> = Vec::new();
    let mut clean_labels = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();

    for i in 0..cfg.size {
        let (content, class) = if !bullets.is_empty() && rng.random_bool(cfg.duplicate_rate) {
            let j = rng.random_range(0..labels.len());
            (labels[j].0.clone(), clean_labels[j])
        } else {
            let class = if rng.random_bool(0.5) {
                Label::Positive
            } else {
                Label::Negative
            };
            (compose(class, &mut rng), class)
        };

        if !slot.contains_key(&content) {
            let noisy = rng.random_bool(cfg.label_noise);
            let label = match (class, noisy) {
                (l, false) => l,
                (Label::Positive, true) => Label::Negative,
                (Label::Negative, true) => Label::Positive,
            };
            slot.insert(content.clone(), labels.len());
            labels.push((content.clone(), label));
            clean_labels.push(class);
        }
        let (upcount, is_friend, is_op) = match class {
            Label::Positive => (
                rng.random_range(0..=40),
                rng.random_range(0..=3),
                rng.random_range(0..=2),
            ),
            Label::Negative => (
                rng.random_range(0..=6),
                rng.random_range(0..=6),
                rng.random_range(0..=1),
            ),
        };
        bullets.push(Bullet {
            comment_id: format!("syn{}-{:06}", cfg.seed, i),
            content,
            upcount,
            is_friend,
            is_op,
        });
    }

    Ok(SynthCorpus {
        bullets,
        labels,
        clean_labels,
    })
}

/// Lays generated bullets out on a video timeline as a display file.
pub fn to_danmaku_file(bullets: &[Bullet], video_id: &str, seed: u64) -> DanmakuFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0f64;
    let bullets = bullets
        .iter()
        .enumerate()
        .map(|(i, b)| {
            t += rng.random_range(0.1..2.0);
            let mode = match rng.random_range(0..10) {
                0 => DisplayMode::Top,
                1 => DisplayMode::Bottom,
                _ => DisplayMode::Scroll,
            };
            DisplayBullet {
                appear_time: (t * 1000.0).round() / 1000.0,
                mode,
                font_size: 25,
                color: *[0xffffff, 0xffffff, 0xfe0302, 0x00cd00, 0xffff00]
                    .choose(&mut rng)
                    .expect("non-empty"),
                send_timestamp: 1_600_000_000 + i as i64 * 37,
                pool: 0,
                user_hash: format!("{:08x}", rng.random::<u32>()),
                row_id: format!("{}", 40_000_000 + i),
                content: b.content.clone(),
            }
        })
        .collect();
    DanmakuFile {
        video_id: video_id.to_string(),
        bullets,
    }
}
