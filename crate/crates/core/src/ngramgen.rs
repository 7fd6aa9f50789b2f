//! Token n-gram SMILES language model with additive smoothing and
//! longest-seen-suffix backoff.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, Read, Write};

use rand::Rng;
use thiserror::Error;

use crate::chemclass::{classify_amine, AmineType};
use crate::fingerprint::{ecfp6, sphere_exclusion_diversity, SEDIV_SAMPLE, SEDIV_THRESHOLD};
use crate::molgraph::{canonical_smiles, parse_valid};

pub const MAGIC: &[u8; 5] = b"SAGM1";
pub const FORMAT_VERSION: &str = "SAGM1";
pub const DEFAULT_ORDER: usize = 6;
pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_MAX_LEN: usize = 80;

const BOS: u32 = 0;
const EOS: u32 = 1;

#[derive(Debug, Error)]
pub enum NgramError {
    #[error("cannot tokenize at byte {pos}: {msg}")]
    Tokenize { pos: usize, msg: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty fine-tune buffer")]
    EmptyBuffer,
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Bos,
    Eos,
    Sym(String),
}

/// Splits a SMILES string into symbol tokens framed by BOS and EOS.
/// Bracket atoms, two-letter halogens and `%nn` ring labels are single
/// tokens.
pub fn tokenize(s: &str) -> Result<Vec<Token>, NgramError> {
    let b = s.as_bytes();
    let mut out = vec![Token::Bos];
    let mut i = 0;
    let err = |pos: usize, msg: &str| NgramError::Tokenize {
        pos,
        msg: msg.to_string(),
    };
    while i < b.len() {
        let len = match b[i] {
            b'[' => {
                let close = b[i..]
                    .iter()
                    .position(|&c| c == b']')
                    .ok_or_else(|| err(i, "unclosed bracket"))?;
                close + 1
            }
            b'C' if b.get(i + 1) == Some(&b'l') => 2,
            b'B' if b.get(i + 1) == Some(&b'r') => 2,
            b'%' => {
                if b.len() < i + 3 || !b[i + 1].is_ascii_digit() || !b[i + 2].is_ascii_digit() {
                    return Err(err(i, "malformed %nn ring label"));
                }
                3
            }
            c if b"BCNOPSFIbcnops-=#:/\\().0123456789*".contains(&c) => 1,
            _ => return Err(err(i, "unexpected character")),
        };
        out.push(Token::Sym(s[i..i + len].to_string()));
        i += len;
    }
    out.push(Token::Eos);
    Ok(out)
}

pub fn detokenize(tokens: &[Token]) -> String {
    tokens
        .iter()
        .filter_map(|t| match t {
            Token::Sym(s) => Some(s.as_str()),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: f64,
    next: BTreeMap<u32, f64>,
}

/// Order-k n-gram model. `order` is the context length.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    order: usize,
    alpha: f64,
    vocab: Vec<String>,
    counts: BTreeMap<Vec<u32>, ContextCounts>,
}

impl GeneratorModel {
    fn empty(order: usize, alpha: f64) -> Self {
        GeneratorModel {
            order,
            alpha,
            vocab: vec!["<s>".into(), "</s>".into()],
            counts: BTreeMap::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Vocabulary symbols, excluding BOS/EOS.
    pub fn symbols(&self) -> &[String] {
        &self.vocab[2..]
    }

    fn id_of(&self, sym: &str) -> Option<u32> {
        self.vocab.iter().position(|v| v == sym).map(|p| p as u32)
    }

    fn intern(&mut self, sym: &str) -> u32 {
        match self.id_of(sym) {
            Some(id) => id,
            None => {
                self.vocab.push(sym.to_string());
                (self.vocab.len() - 1) as u32
            }
        }
    }

    fn encode(&mut self, s: &str) -> Result<Vec<u32>, NgramError> {
        let toks = tokenize(s)?;
        Ok(toks
            .iter()
            .filter_map(|t| match t {
                Token::Sym(s) => Some(self.intern(s)),
                Token::Eos => Some(EOS),
                Token::Bos => None,
            })
            .collect())
    }

    /// Adds `weight` times the padded k-gram counts of `s` for every
    /// context length 0..=order.
    fn add_counts(&mut self, s: &str, weight: f64) -> Result<(), NgramError> {
        let ids = self.encode(s)?;
        let mut history = vec![BOS; self.order];
        for &target in &ids {
            for len in 0..=self.order {
                let ctx = history[history.len() - len..].to_vec();
                let entry = self.counts.entry(ctx).or_default();
                entry.total += weight;
                *entry.next.entry(target).or_insert(0.0) += weight;
            }
            history.push(target);
        }
        Ok(())
    }

    /// Number of possible next tokens: everything but BOS.
    fn targets(&self) -> usize {
        self.vocab.len() - 1
    }

    fn backoff_context<'a>(&'a self, history: &[u32]) -> &'a ContextCounts {
        let max = self.order.min(history.len());
        for len in (0..=max).rev() {
            if let Some(c) = self.counts.get(&history[history.len() - len..]) {
                if c.total > 0.0 {
                    return c;
                }
            }
        }
        static EMPTY: ContextCounts = ContextCounts {
            total: 0.0,
            next: BTreeMap::new(),
        };
        &EMPTY
    }

    fn prob_id(&self, history: &[u32], target: u32) -> f64 {
        let c = self.backoff_context(history);
        let k = self.targets() as f64;
        let denom = c.total + self.alpha * k;
        if denom == 0.0 {
            return 1.0 / k;
        }
        (c.next.get(&target).copied().unwrap_or(0.0) + self.alpha) / denom
    }

    fn padded_history(&self, context: &[String]) -> Option<Vec<u32>> {
        let mut h = vec![BOS; self.order];
        for s in context {
            h.push(self.id_of(s)?);
        }
        Some(h)
    }

    /// P(next | context) where `context` is the symbol prefix after BOS and
    /// `next` is a symbol or `None` for EOS.
    pub fn prob(&self, context: &[String], next: Option<&str>) -> f64 {
        let Some(h) = self.padded_history(context) else {
            return 0.0;
        };
        let id = match next {
            None => EOS,
            Some(s) => match self.id_of(s) {
                Some(id) if id != BOS => id,
                _ => return 0.0,
            },
        };
        self.prob_id(&h, id)
    }

    /// Full next-token distribution; index 0 is EOS, index i ≥ 1 is
    /// `symbols()[i-1]`.
    pub fn distribution(&self, context: &[String]) -> Vec<f64> {
        match self.padded_history(context) {
            Some(h) => (1..self.vocab.len() as u32).map(|id| self.prob_id(&h, id)).collect(),
            None => vec![0.0; self.targets()],
        }
    }

    /// Natural-log probability of the whole string including EOS.
    pub fn log_prob(&self, s: &str) -> Result<f64, NgramError> {
        let toks = tokenize(s)?;
        let mut h = vec![BOS; self.order];
        let mut lp = 0.0;
        for t in &toks[1..] {
            let id = match t {
                Token::Eos => EOS,
                Token::Sym(sym) => match self.id_of(sym) {
                    Some(id) => id,
                    None => return Ok(f64::NEG_INFINITY),
                },
                Token::Bos => unreachable!(),
            };
            lp += self.prob_id(&h, id).ln();
            h.push(id);
        }
        Ok(lp)
    }

    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R, max_len: usize) -> String {
        let mut h = vec![BOS; self.order];
        let mut out = String::new();
        for _ in 0..max_len {
            let c = self.backoff_context(&h);
            let k = self.targets() as f64;
            let denom = c.total + self.alpha * k;
            let mut u = rng.gen::<f64>() * denom;
            let mut chosen = None;
            if self.alpha > 0.0 || denom == 0.0 {
                for id in 1..self.vocab.len() as u32 {
                    let w = if denom == 0.0 {
                        1.0
                    } else {
                        c.next.get(&id).copied().unwrap_or(0.0) + self.alpha
                    };
                    if u < w {
                        chosen = Some(id);
                        break;
                    }
                    u -= w;
                }
            } else {
                for (&id, &w) in &c.next {
                    if w > 0.0 && u < w {
                        chosen = Some(id);
                        break;
                    }
                    u -= w;
                }
            }
            // float round-off at the top end lands on the last positive token
            let id = chosen.unwrap_or_else(|| {
                *c.next
                    .iter()
                    .rev()
                    .find(|(_, &w)| w > 0.0)
                    .map(|(id, _)| id)
                    .unwrap_or(&EOS)
            });
            if id == EOS {
                break;
            }
            out.push_str(&self.vocab[id as usize]);
            h.push(id);
        }
        out
    }
}

pub fn train(corpus: &[impl AsRef<str>], order: usize, alpha: f64) -> Result<GeneratorModel, NgramError> {
    if corpus.is_empty() {
        return Err(NgramError::EmptyCorpus);
    }
    let mut model = GeneratorModel::empty(order, alpha);
    for s in corpus {
        model.add_counts(s.as_ref(), 1.0)?;
    }
    Ok(model)
}

/// `n` raw strings sampled token by token until EOS or `max_len` tokens.
pub fn sample<R: Rng + ?Sized>(model: &GeneratorModel, n: usize, rng: &mut R, max_len: usize) -> Vec<String> {
    (0..n).map(|_| model.sample_one(rng, max_len)).collect()
}

/// New model with counts + λ·counts(buffer). Scores in the buffer are not
/// used as weights.
pub fn fine_tune(
    model: &GeneratorModel,
    buffer: &[(String, f64)],
    lambda: f64,
) -> Result<GeneratorModel, NgramError> {
    if buffer.is_empty() {
        return Err(NgramError::EmptyBuffer);
    }
    let mut next = model.clone();
    if lambda == 0.0 {
        return Ok(next);
    }
    for (s, _) in buffer {
        next.add_counts(s, lambda)?;
    }
    Ok(next)
}

/// Per-token perplexity over `corpus`, EOS included.
pub fn perplexity(model: &GeneratorModel, corpus: &[impl AsRef<str>]) -> Result<f64, NgramError> {
    let mut lp = 0.0;
    let mut tokens = 0usize;
    for s in corpus {
        lp += model.log_prob(s.as_ref())?;
        tokens += tokenize(s.as_ref())?.len() - 1;
    }
    if tokens == 0 {
        return Err(NgramError::EmptyCorpus);
    }
    Ok((-lp / tokens as f64).exp())
}

fn put_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

/// Binary layout, all integers little-endian:
///
/// ```text
/// "SAGM1"
/// u32 order, f64 alpha
/// u32 vocab_len, then vocab_len × (u32 byte_len, utf-8 bytes)
/// u32 context_count, then per context in sorted order:
///     u32 ctx_len, ctx_len × u32 token id,
///     f64 total, u32 entry_count, entry_count × (u32 token id, f64 count)
/// ```
///
/// Token ids 0 and 1 are BOS and EOS.
pub fn write_model(model: &GeneratorModel, w: &mut impl Write) -> io::Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, model.order as u32)?;
    put_f64(w, model.alpha)?;
    put_u32(w, model.vocab.len() as u32)?;
    for v in &model.vocab {
        put_u32(w, v.len() as u32)?;
        w.write_all(v.as_bytes())?;
    }
    put_u32(w, model.counts.len() as u32)?;
    for (ctx, c) in &model.counts {
        put_u32(w, ctx.len() as u32)?;
        for &id in ctx {
            put_u32(w, id)?;
        }
        put_f64(w, c.total)?;
        put_u32(w, c.next.len() as u32)?;
        for (&id, &n) in &c.next {
            put_u32(w, id)?;
            put_f64(w, n)?;
        }
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NgramError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| NgramError::Format("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NgramError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NgramError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_model(r: &mut impl Read) -> Result<GeneratorModel, NgramError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut rd = Reader { buf: &buf, pos: 0 };
    if rd.take(MAGIC.len())? != MAGIC {
        return Err(NgramError::Format("bad magic".into()));
    }
    let order = rd.u32()? as usize;
    let alpha = rd.f64()?;
    let nv = rd.u32()? as usize;
    let mut vocab = Vec::with_capacity(nv.min(1 << 16));
    for _ in 0..nv {
        let len = rd.u32()? as usize;
        let s = std::str::from_utf8(rd.take(len)?)
            .map_err(|_| NgramError::Format("vocab entry is not utf-8".into()))?;
        vocab.push(s.to_string());
    }
    if vocab.len() < 2 {
        return Err(NgramError::Format("vocabulary lacks BOS/EOS".into()));
    }
    let nc = rd.u32()? as usize;
    let mut counts = BTreeMap::new();
    for _ in 0..nc {
        let len = rd.u32()? as usize;
        if len > order {
            return Err(NgramError::Format("context longer than order".into()));
        }
        let mut ctx = Vec::with_capacity(len);
        for _ in 0..len {
            ctx.push(rd.u32()?);
        }
        let total = rd.f64()?;
        let ne = rd.u32()? as usize;
        let mut next = BTreeMap::new();
        for _ in 0..ne {
            let id = rd.u32()?;
            if id as usize >= vocab.len() {
                return Err(NgramError::Format("token id out of range".into()));
            }
            next.insert(id, rd.f64()?);
        }
        counts.insert(ctx, ContextCounts { total, next });
    }
    if rd.pos != buf.len() {
        return Err(NgramError::Format("trailing bytes".into()));
    }
    Ok(GeneratorModel {
        order,
        alpha,
        vocab,
        counts,
    })
}

/// Human-readable dump: header lines, then one line per context.
pub fn dump_text(model: &GeneratorModel, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "format {FORMAT_VERSION}")?;
    writeln!(w, "order {}", model.order)?;
    writeln!(w, "alpha {}", model.alpha)?;
    writeln!(w, "vocab {}", model.vocab.join(" "))?;
    for (ctx, c) in &model.counts {
        let ctx_s: Vec<&str> = ctx.iter().map(|&i| model.vocab[i as usize].as_str()).collect();
        write!(w, "[{}] total={}", ctx_s.join(" "), c.total)?;
        for (&id, &n) in &c.next {
            write!(w, " {}={}", model.vocab[id as usize], n)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenMetrics {
    pub validity: f64,
    pub uniqueness: f64,
    pub novelty: f64,
    pub sediv: f64,
    pub amine_ratio: f64,
    pub type_ratios: BTreeMap<AmineType, f64>,
}

impl GenMetrics {
    pub const HEADER: &'static str =
        "Validity,Uniqueness,Novelty,SEDiv,Amine,Primary,Secondary,Tertiary,Cyclic,Poly";

    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.validity,
            self.uniqueness,
            self.novelty,
            self.sediv,
            self.amine_ratio,
        ];
        for t in AmineType::AMINES {
            cols.push(self.type_ratios.get(&t).copied().unwrap_or(0.0));
        }
        cols.iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Validity over all samples; uniqueness over valid; novelty, diversity and
/// amine ratios over the unique valid set.
pub fn distribution_metrics<R: Rng + ?Sized>(
    samples: &[impl AsRef<str>],
    training_set: &HashSet<String>,
    rng: &mut R,
) -> GenMetrics {
    let mut valid = 0usize;
    let mut unique: BTreeMap<String, crate::molgraph::Molecule> = BTreeMap::new();
    for s in samples {
        if let Some(m) = parse_valid(s.as_ref()) {
            valid += 1;
            unique.entry(canonical_smiles(&m)).or_insert(m);
        }
    }
    let mut out = GenMetrics::default();
    if valid == 0 {
        return out;
    }
    out.validity = valid as f64 / samples.len() as f64;
    out.uniqueness = unique.len() as f64 / valid as f64;
    let u = unique.len() as f64;
    out.novelty = unique.keys().filter(|k| !training_set.contains(*k)).count() as f64 / u;
    let fps: Vec<_> = unique.values().map(ecfp6).collect();
    out.sediv = sphere_exclusion_diversity(&fps, SEDIV_THRESHOLD, SEDIV_SAMPLE, rng).unwrap_or(0.0);
    let mut by_type: BTreeMap<AmineType, usize> = BTreeMap::new();
    for m in unique.values() {
        *by_type.entry(classify_amine(m)).or_insert(0) += 1;
    }
    let amines: usize = AmineType::AMINES.iter().filter_map(|t| by_type.get(t)).sum();
    out.amine_ratio = amines as f64 / u;
    for t in AmineType::AMINES {
        out.type_ratios
            .insert(t, by_type.get(&t).copied().unwrap_or(0) as f64 / u);
    }
    out
}
