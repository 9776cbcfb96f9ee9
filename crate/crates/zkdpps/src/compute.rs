//! Cipher-to-cipher task evaluation and the worker pool that runs it.
//!
//! A task names a function and an ordered operand list; evaluation is strict
//! left-to-right with no re-association, so every honest replica produces
//! byte-identical output. Workers never see key material: this module has no
//! path to secret shares or decryption, results leave as opaque bytes plus a
//! ledger hash commitment.
//!
//! Fault modes exist for replication tests: a Byzantine worker flips one
//! byte of the honest result, a lazy worker replays its previous result, and
//! a silent worker produces nothing.

use crate::digest::Digest;
use crate::he::{self, Ciphertext, HeError, HeParams};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ComputeError {
    #[error("function requires {expected} operands, got {got}")]
    BadArity { expected: &'static str, got: usize },
    #[error("operand index {index} out of range for {count} operands")]
    OperandIndex { index: usize, count: usize },
    #[error("bad pipeline: {0}")]
    BadPipeline(&'static str),
    #[error("computer id {0} already registered")]
    DuplicateId(u32),
    #[error("malformed operand payload: {0}")]
    MalformedPayload(&'static str),
    #[error(transparent)]
    Encryption(#[from] HeError),
}

/// One pipeline step. The accumulator starts from the operand named by the
/// leading `Load` and every later step folds one more operation into it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Load(usize),
    Add(usize),
    Sub(usize),
    Mul(usize),
    AddScaled(usize, u64),
    SubScaled(usize, u64),
    Scale(u64),
}

/// The function a task applies to its operands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Function {
    /// Fold addition over all operands.
    Sum,
    /// First operand minus all the rest.
    Sub,
    /// Product of exactly two operands.
    Mul,
    /// Exactly one operand times a public scalar.
    ScalarMul(u64),
    /// Explicit step list for mixed shapes.
    Pipeline(Vec<Step>),
}

impl Function {
    /// One-byte tag carried in envelopes and ledger commits.
    pub fn tag(&self) -> u8 {
        match self {
            Function::Sum => 1,
            Function::Sub => 2,
            Function::Mul => 3,
            Function::ScalarMul(_) => 4,
            Function::Pipeline(_) => 5,
        }
    }

    /// Canonical serialization: the tag, then parameters little-endian;
    /// pipeline steps as fixed-width (tag, operand, scalar) records.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.tag()];
        match self {
            Function::Sum | Function::Sub | Function::Mul => {}
            Function::ScalarMul(k) => out.extend_from_slice(&k.to_le_bytes()),
            Function::Pipeline(steps) => {
                out.extend_from_slice(&(steps.len() as u32).to_le_bytes());
                for step in steps {
                    let (tag, index, scalar) = match *step {
                        Step::Load(i) => (1u8, i, 0),
                        Step::Add(i) => (2, i, 0),
                        Step::Sub(i) => (3, i, 0),
                        Step::Mul(i) => (4, i, 0),
                        Step::AddScaled(i, k) => (5, i, k),
                        Step::SubScaled(i, k) => (6, i, k),
                        Step::Scale(k) => (7, 0, k),
                    };
                    out.push(tag);
                    out.extend_from_slice(&(index as u32).to_le_bytes());
                    out.extend_from_slice(&scalar.to_le_bytes());
                }
            }
        }
        out
    }
}

/// Task identity: digest over the source envelope hashes (in task order) and
/// the function. Anyone holding the committed envelopes re-derives it.
pub fn task_id(source_envelope_hashes: &[Digest], function: &Function) -> Digest {
    let mut parts: Vec<&[u8]> = source_envelope_hashes
        .iter()
        .map(|h| h.as_bytes().as_slice())
        .collect();
    let function_bytes = function.canonical_bytes();
    parts.push(&function_bytes);
    Digest::of_parts(&parts)
}

/// A fully formed unit of work: identity, function, decoded operands.
#[derive(Debug, Clone)]
pub struct Task {
    pub id: Digest,
    pub function: Function,
    pub operands: Vec<Ciphertext>,
}

/// Applies `function` to encrypted operands, strictly left to right.
pub fn evaluate(
    params: &HeParams,
    function: &Function,
    operands: &[Ciphertext],
) -> Result<Ciphertext, ComputeError> {
    let get = |i: usize| {
        operands.get(i).ok_or(ComputeError::OperandIndex {
            index: i,
            count: operands.len(),
        })
    };
    match function {
        Function::Sum => {
            let mut acc = need_first(operands, "at least one")?.clone();
            for op in &operands[1..] {
                acc = he::add(params, &acc, op)?;
            }
            Ok(acc)
        }
        Function::Sub => {
            let mut acc = need_first(operands, "at least one")?.clone();
            for op in &operands[1..] {
                acc = he::sub(params, &acc, op)?;
            }
            Ok(acc)
        }
        Function::Mul => {
            if operands.len() != 2 {
                return Err(ComputeError::BadArity {
                    expected: "exactly two",
                    got: operands.len(),
                });
            }
            Ok(he::mul(params, &operands[0], &operands[1])?)
        }
        Function::ScalarMul(k) => {
            if operands.len() != 1 {
                return Err(ComputeError::BadArity {
                    expected: "exactly one",
                    got: operands.len(),
                });
            }
            Ok(he::scalar_mul(params, *k, &operands[0])?)
        }
        Function::Pipeline(steps) => {
            let mut iter = steps.iter();
            let mut acc = match iter.next() {
                Some(Step::Load(i)) => get(*i)?.clone(),
                Some(_) => return Err(ComputeError::BadPipeline("must start with a load step")),
                None => return Err(ComputeError::BadPipeline("empty step list")),
            };
            for step in iter {
                acc = match *step {
                    Step::Load(_) => {
                        return Err(ComputeError::BadPipeline("load is only valid first"))
                    }
                    Step::Add(i) => he::add(params, &acc, get(i)?)?,
                    Step::Sub(i) => he::sub(params, &acc, get(i)?)?,
                    Step::Mul(i) => he::mul(params, &acc, get(i)?)?,
                    Step::AddScaled(i, k) => {
                        he::add(params, &acc, &he::scalar_mul(params, k, get(i)?)?)?
                    }
                    Step::SubScaled(i, k) => {
                        he::sub(params, &acc, &he::scalar_mul(params, k, get(i)?)?)?
                    }
                    Step::Scale(k) => he::scalar_mul(params, k, &acc)?,
                };
            }
            Ok(acc)
        }
    }
}

fn need_first<'a>(
    operands: &'a [Ciphertext],
    expected: &'static str,
) -> Result<&'a Ciphertext, ComputeError> {
    operands.first().ok_or(ComputeError::BadArity {
        expected,
        got: 0,
    })
}

/// The same function on plaintext residues mod `modulus`: the baseline mode
/// runs on this, and oracle checks compare encrypted results against it.
pub fn evaluate_plain(
    function: &Function,
    values: &[u64],
    modulus: u64,
) -> Result<u64, ComputeError> {
    let m = u128::from(modulus);
    let get = |i: usize| {
        values
            .get(i)
            .copied()
            .ok_or(ComputeError::OperandIndex {
                index: i,
                count: values.len(),
            })
            .map(|v| u128::from(v) % m)
    };
    let first = |expected: &'static str| {
        values
            .first()
            .copied()
            .ok_or(ComputeError::BadArity { expected, got: 0 })
            .map(|v| u128::from(v) % m)
    };
    let sub_mod = |a: u128, b: u128| (a + m - b % m) % m;
    let value = match function {
        Function::Sum => {
            let mut acc = first("at least one")?;
            for &v in &values[1..] {
                acc = (acc + u128::from(v)) % m;
            }
            acc
        }
        Function::Sub => {
            let mut acc = first("at least one")?;
            for &v in &values[1..] {
                acc = sub_mod(acc, u128::from(v));
            }
            acc
        }
        Function::Mul => {
            if values.len() != 2 {
                return Err(ComputeError::BadArity {
                    expected: "exactly two",
                    got: values.len(),
                });
            }
            get(0)? * get(1)? % m
        }
        Function::ScalarMul(k) => {
            if values.len() != 1 {
                return Err(ComputeError::BadArity {
                    expected: "exactly one",
                    got: values.len(),
                });
            }
            get(0)? * (u128::from(*k) % m) % m
        }
        Function::Pipeline(steps) => {
            let mut iter = steps.iter();
            let mut acc = match iter.next() {
                Some(Step::Load(i)) => get(*i)?,
                Some(_) => return Err(ComputeError::BadPipeline("must start with a load step")),
                None => return Err(ComputeError::BadPipeline("empty step list")),
            };
            for step in iter {
                acc = match *step {
                    Step::Load(_) => {
                        return Err(ComputeError::BadPipeline("load is only valid first"))
                    }
                    Step::Add(i) => (acc + get(i)?) % m,
                    Step::Sub(i) => sub_mod(acc, get(i)?),
                    Step::Mul(i) => acc * get(i)? % m,
                    Step::AddScaled(i, k) => (acc + get(i)? * (u128::from(k) % m) % m) % m,
                    Step::SubScaled(i, k) => sub_mod(acc, get(i)? * (u128::from(k) % m) % m),
                    Step::Scale(k) => acc * (u128::from(k) % m) % m,
                };
            }
            acc
        }
    };
    Ok(value as u64)
}

/// Encodes an operand list for transport: u32 count, then each ciphertext
/// length-prefixed.
pub fn encode_operands(operands: &[Ciphertext]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(operands.len() as u32).to_le_bytes());
    for ct in operands {
        let bytes = ct.to_bytes();
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

pub fn decode_operands(params: &HeParams, bytes: &[u8]) -> Result<Vec<Ciphertext>, ComputeError> {
    const MAX_OPERANDS: u32 = 64;
    if bytes.len() < 4 {
        return Err(ComputeError::MalformedPayload("truncated count"));
    }
    let count = u32::from_le_bytes(bytes[..4].try_into().unwrap());
    if count == 0 || count > MAX_OPERANDS {
        return Err(ComputeError::MalformedPayload("operand count out of range"));
    }
    let mut rest = &bytes[4..];
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        if rest.len() < 4 {
            return Err(ComputeError::MalformedPayload("truncated length prefix"));
        }
        let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        rest = &rest[4..];
        if rest.len() < len {
            return Err(ComputeError::MalformedPayload("truncated ciphertext"));
        }
        out.push(Ciphertext::from_bytes(params, &rest[..len])?);
        rest = &rest[len..];
    }
    if !rest.is_empty() {
        return Err(ComputeError::MalformedPayload("trailing bytes"));
    }
    Ok(out)
}

/// How a worker behaves when handed a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultMode {
    Honest,
    /// Flip one byte of the honest result.
    ByzantineFlip,
    /// Return the previous task's result; a fixed stale ciphertext on the
    /// first task.
    LazyStale,
    /// Produce nothing at all.
    Silent,
}

#[derive(Debug, Clone)]
pub struct ComputeNode {
    pub id: u32,
    pub fault: FaultMode,
    pub tasks_run: u64,
    last_result: Option<Vec<u8>>,
}

impl ComputeNode {
    pub fn new(id: u32, fault: FaultMode) -> Self {
        ComputeNode {
            id,
            fault,
            tasks_run: 0,
            last_result: None,
        }
    }

    /// Runs one task. `None` models a worker that never responds; everyone
    /// else returns result bytes (or a computation error worth logging).
    pub fn run_task(
        &mut self,
        params: &HeParams,
        task: &Task,
    ) -> Option<Result<Vec<u8>, ComputeError>> {
        self.tasks_run += 1;
        if self.fault == FaultMode::Silent {
            return None;
        }
        let honest = evaluate(params, &task.function, &task.operands).map(|ct| ct.to_bytes());
        let out = match (self.fault, honest) {
            (_, Err(e)) => Err(e),
            (FaultMode::Honest, Ok(bytes)) => {
                self.last_result = Some(bytes.clone());
                Ok(bytes)
            }
            (FaultMode::ByzantineFlip, Ok(bytes)) => {
                self.last_result = Some(bytes.clone());
                let mut corrupt = bytes;
                // flip position varies by id so two Byzantine workers do not
                // accidentally agree with each other
                let pos = (corrupt.len() / 2 + self.id as usize) % corrupt.len();
                corrupt[pos] ^= 0x01;
                Ok(corrupt)
            }
            (FaultMode::LazyStale, Ok(bytes)) => {
                let stale = self.last_result.replace(bytes).unwrap_or_else(|| {
                    he::trivial(params, 0, 0)
                        .expect("zero is a valid plaintext")
                        .to_bytes()
                });
                Ok(stale)
            }
            (FaultMode::Silent, _) => unreachable!("handled above"),
        };
        Some(out)
    }
}

/// Registry of workers eligible for allocation.
#[derive(Debug, Default)]
pub struct ComputerPool {
    nodes: BTreeMap<u32, ComputeNode>,
}

impl ComputerPool {
    pub fn new() -> Self {
        ComputerPool::default()
    }

    pub fn register(&mut self, node: ComputeNode) -> Result<(), ComputeError> {
        let id = node.id;
        if self.nodes.contains_key(&id) {
            return Err(ComputeError::DuplicateId(id));
        }
        self.nodes.insert(id, node);
        Ok(())
    }

    /// Registered ids in ascending order; the allocation domain.
    pub fn ids(&self) -> Vec<u32> {
        self.nodes.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get_mut(&mut self, id: u32) -> Option<&mut ComputeNode> {
        self.nodes.get_mut(&id)
    }

    pub fn get(&self, id: u32) -> Option<&ComputeNode> {
        self.nodes.get(&id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (HeParams, he::HeKeyPair, ChaCha20Rng) {
        let params = HeParams::desk_default();
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let keys = he::keygen(&params, &mut rng).unwrap();
        (params, keys, rng)
    }

    fn enc(params: &HeParams, keys: &he::HeKeyPair, rng: &mut ChaCha20Rng, v: u64) -> Ciphertext {
        he::encrypt(params, &keys.public, 0, v, rng).unwrap()
    }

    fn task_of(params: &HeParams, keys: &he::HeKeyPair, rng: &mut ChaCha20Rng, function: Function, values: &[u64]) -> Task {
        let operands: Vec<Ciphertext> = values.iter().map(|&v| enc(params, keys, rng, v)).collect();
        Task {
            id: task_id(&[Digest::of(b"src")], &function),
            function,
            operands,
        }
    }

    #[test]
    fn named_functions_decrypt_to_hand_values() {
        let (params, keys, mut rng) = setup();
        let dec = |ct: &Ciphertext| he::decrypt(&params, &keys.secret, ct).unwrap();
        let run = |f: Function, vals: &[u64], rng: &mut ChaCha20Rng| {
            let ops: Vec<Ciphertext> = vals.iter().map(|&v| enc(&params, &keys, rng, v)).collect();
            evaluate(&params, &f, &ops).unwrap()
        };
        assert_eq!(dec(&run(Function::Sum, &[5, 7], &mut rng)), 12);
        assert_eq!(dec(&run(Function::Sub, &[10, 3, 2], &mut rng)), 5);
        assert_eq!(dec(&run(Function::Mul, &[6, 7], &mut rng)), 42);
        assert_eq!(dec(&run(Function::ScalarMul(9), &[8], &mut rng)), 72);
    }

    #[test]
    fn pipelines_match_plain_evaluation() {
        let (params, keys, mut rng) = setup();
        let t = params.plaintext_modulus;
        let cases: Vec<(Function, Vec<u64>)> = vec![
            // total minus an adjustment
            (
                Function::Pipeline(vec![Step::Load(0), Step::Add(1), Step::Sub(2)]),
                vec![5, 7, 0],
            ),
            // margin: price minus unit-weighted costs
            (
                Function::Pipeline(vec![
                    Step::Load(3),
                    Step::SubScaled(0, 1),
                    Step::SubScaled(1, 1),
                    Step::SubScaled(2, 1),
                ]),
                vec![3, 4, 5, 15],
            ),
            // scaled fold with a product inside the depth budget
            (
                Function::Pipeline(vec![Step::Load(0), Step::Scale(2), Step::AddScaled(1, 3)]),
                vec![10, 20],
            ),
            (
                Function::Pipeline(vec![Step::Load(0), Step::Mul(1), Step::Add(0)]),
                vec![9, 11],
            ),
        ];
        for (f, vals) in cases {
            let expected = evaluate_plain(&f, &vals, t).unwrap();
            let ops: Vec<Ciphertext> =
                vals.iter().map(|&v| enc(&params, &keys, &mut rng, v)).collect();
            let got = he::decrypt(&params, &keys.secret, &evaluate(&params, &f, &ops).unwrap())
                .unwrap();
            assert_eq!(got, expected, "{f:?} over {vals:?}");
        }
        // hand values for the first two, independent of evaluate_plain
        assert_eq!(
            evaluate_plain(
                &Function::Pipeline(vec![Step::Load(0), Step::Add(1), Step::Sub(2)]),
                &[5, 7, 0],
                t
            )
            .unwrap(),
            12
        );
        assert_eq!(
            evaluate_plain(
                &Function::Pipeline(vec![
                    Step::Load(3),
                    Step::SubScaled(0, 1),
                    Step::SubScaled(1, 1),
                    Step::SubScaled(2, 1),
                ]),
                &[3, 4, 5, 15],
                t
            )
            .unwrap(),
            3
        );
    }

    #[test]
    fn arity_and_shape_errors() {
        let (params, keys, mut rng) = setup();
        let one = vec![enc(&params, &keys, &mut rng, 1)];
        assert!(matches!(
            evaluate(&params, &Function::Mul, &one),
            Err(ComputeError::BadArity { .. })
        ));
        assert!(matches!(
            evaluate(&params, &Function::Sum, &[]),
            Err(ComputeError::BadArity { .. })
        ));
        assert!(matches!(
            evaluate(&params, &Function::ScalarMul(2), &[]),
            Err(ComputeError::BadArity { .. })
        ));
        assert!(matches!(
            evaluate(
                &params,
                &Function::Pipeline(vec![Step::Load(0), Step::Add(9)]),
                &one
            ),
            Err(ComputeError::OperandIndex { index: 9, count: 1 })
        ));
        assert!(matches!(
            evaluate(&params, &Function::Pipeline(vec![Step::Add(0)]), &one),
            Err(ComputeError::BadPipeline(_))
        ));
        assert!(matches!(
            evaluate(&params, &Function::Pipeline(vec![]), &one),
            Err(ComputeError::BadPipeline(_))
        ));
        assert!(matches!(
            evaluate(
                &params,
                &Function::Pipeline(vec![Step::Load(0), Step::Load(0)]),
                &one
            ),
            Err(ComputeError::BadPipeline(_))
        ));
    }

    #[test]
    fn depth_error_propagates() {
        let (params, keys, mut rng) = setup();
        let ops: Vec<Ciphertext> = (2..5).map(|v| enc(&params, &keys, &mut rng, v)).collect();
        let f = Function::Pipeline(vec![Step::Load(0), Step::Mul(1), Step::Mul(2)]);
        assert_eq!(
            evaluate(&params, &f, &ops),
            Err(ComputeError::Encryption(HeError::DepthExceeded))
        );
    }

    #[test]
    fn honest_replicas_agree_byte_for_byte() {
        let (params, keys, mut rng) = setup();
        let task = task_of(&params, &keys, &mut rng, Function::Sum, &[5, 7]);
        let mut n1 = ComputeNode::new(1, FaultMode::Honest);
        let mut n2 = ComputeNode::new(2, FaultMode::Honest);
        let r1 = n1.run_task(&params, &task).unwrap().unwrap();
        let r2 = n2.run_task(&params, &task).unwrap().unwrap();
        assert_eq!(r1, r2);
        assert_eq!(Digest::of(&r1), Digest::of(&r2));
        let back = Ciphertext::from_bytes(&params, &r1).unwrap();
        assert_eq!(he::decrypt(&params, &keys.secret, &back).unwrap(), 12);
    }

    #[test]
    fn byzantine_flip_changes_hash_and_disagrees_across_nodes() {
        let (params, keys, mut rng) = setup();
        let task = task_of(&params, &keys, &mut rng, Function::Sum, &[5, 7]);
        let mut honest = ComputeNode::new(1, FaultMode::Honest);
        let mut byz1 = ComputeNode::new(2, FaultMode::ByzantineFlip);
        let mut byz2 = ComputeNode::new(3, FaultMode::ByzantineFlip);
        let h = honest.run_task(&params, &task).unwrap().unwrap();
        let b1 = byz1.run_task(&params, &task).unwrap().unwrap();
        let b2 = byz2.run_task(&params, &task).unwrap().unwrap();
        assert_ne!(Digest::of(&h), Digest::of(&b1));
        assert_ne!(Digest::of(&h), Digest::of(&b2));
        assert_ne!(Digest::of(&b1), Digest::of(&b2));
        // exactly one byte differs from honest
        assert_eq!(h.len(), b1.len());
        assert_eq!(h.iter().zip(&b1).filter(|(a, b)| a != b).count(), 1);
    }

    #[test]
    fn lazy_worker_replays_previous_result() {
        let (params, keys, mut rng) = setup();
        let t1 = task_of(&params, &keys, &mut rng, Function::Sum, &[5, 7]);
        let t2 = task_of(&params, &keys, &mut rng, Function::Sum, &[20, 30]);
        let mut honest = ComputeNode::new(1, FaultMode::Honest);
        let mut lazy = ComputeNode::new(2, FaultMode::LazyStale);

        // first task: fixed stale placeholder, nothing honest to replay
        let stale = lazy.run_task(&params, &t1).unwrap().unwrap();
        let h1 = honest.run_task(&params, &t1).unwrap().unwrap();
        assert_ne!(Digest::of(&stale), Digest::of(&h1));
        assert_eq!(stale, he::trivial(&params, 0, 0).unwrap().to_bytes());

        // second task: replays the honest result of the first
        let replay = lazy.run_task(&params, &t2).unwrap().unwrap();
        let h2 = honest.run_task(&params, &t2).unwrap().unwrap();
        assert_eq!(replay, h1);
        assert_ne!(Digest::of(&replay), Digest::of(&h2));
    }

    #[test]
    fn silent_worker_produces_nothing() {
        let (params, keys, mut rng) = setup();
        let task = task_of(&params, &keys, &mut rng, Function::Sum, &[5, 7]);
        let mut silent = ComputeNode::new(4, FaultMode::Silent);
        assert!(silent.run_task(&params, &task).is_none());
        assert_eq!(silent.tasks_run, 1);
    }

    #[test]
    fn pool_rejects_duplicate_ids() {
        let mut pool = ComputerPool::new();
        pool.register(ComputeNode::new(3, FaultMode::Honest)).unwrap();
        pool.register(ComputeNode::new(1, FaultMode::Honest)).unwrap();
        assert_eq!(
            pool.register(ComputeNode::new(3, FaultMode::Silent)),
            Err(ComputeError::DuplicateId(3))
        );
        assert_eq!(pool.ids(), vec![1, 3]);
        assert_eq!(pool.len(), 2);
    }

    #[test]
    fn operand_codec_roundtrip_and_rejection() {
        let (params, keys, mut rng) = setup();
        let ops: Vec<Ciphertext> = [4u64, 9, 16]
            .iter()
            .map(|&v| enc(&params, &keys, &mut rng, v))
            .collect();
        let bytes = encode_operands(&ops);
        let back = decode_operands(&params, &bytes).unwrap();
        assert_eq!(back, ops);

        assert!(decode_operands(&params, &bytes[..3]).is_err());
        assert!(decode_operands(&params, &bytes[..bytes.len() - 1]).is_err());
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(decode_operands(&params, &trailing).is_err());
        let mut zero_count = bytes;
        zero_count[..4].copy_from_slice(&0u32.to_le_bytes());
        assert!(decode_operands(&params, &zero_count).is_err());
    }

    #[test]
    fn task_identity_tracks_sources_and_function() {
        let h1 = Digest::of(b"envelope-1");
        let h2 = Digest::of(b"envelope-2");
        let sum = task_id(&[h1, h2], &Function::Sum);
        assert_eq!(sum, task_id(&[h1, h2], &Function::Sum));
        assert_ne!(sum, task_id(&[h2, h1], &Function::Sum));
        assert_ne!(sum, task_id(&[h1, h2], &Function::Sub));
        assert_ne!(sum, task_id(&[h1], &Function::Sum));
        assert_ne!(
            task_id(&[h1], &Function::ScalarMul(2)),
            task_id(&[h1], &Function::ScalarMul(3))
        );
        // pipeline parameters are part of the identity
        let p1 = Function::Pipeline(vec![Step::Load(0), Step::AddScaled(1, 2)]);
        let p2 = Function::Pipeline(vec![Step::Load(0), Step::AddScaled(1, 3)]);
        assert_ne!(task_id(&[h1], &p1), task_id(&[h1], &p2));
    }

    #[test]
    fn random_functions_agree_with_plain_oracle() {
        let (params, keys, mut rng) = setup();
        let t = params.plaintext_modulus;
        for i in 0..30u64 {
            let a = (i * 7907 + 13) % t;
            let b = (i * 104729 + 7) % t;
            let k = (i * 31 + 2) % t;
            let cases = [
                (Function::Sum, vec![a, b]),
                (Function::Sub, vec![a, b]),
                (Function::Mul, vec![a, b]),
                (Function::ScalarMul(k), vec![a]),
                (
                    Function::Pipeline(vec![Step::Load(0), Step::SubScaled(1, k)]),
                    vec![a, b],
                ),
            ];
            for (f, vals) in cases {
                let expected = evaluate_plain(&f, &vals, t).unwrap();
                let ops: Vec<Ciphertext> = vals
                    .iter()
                    .map(|&v| enc(&params, &keys, &mut rng, v))
                    .collect();
                let ct = evaluate(&params, &f, &ops).unwrap();
                assert_eq!(
                    he::decrypt(&params, &keys.secret, &ct).unwrap(),
                    expected,
                    "{f:?} over {vals:?}"
                );
            }
        }
    }
}
