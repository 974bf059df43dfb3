//! Character- and token-level Levenshtein alignment.
//!
//! Costs are uniform (1 for substitution, insertion and deletion). The
//! traceback runs from the bottom-right DP cell and, when several moves reach
//! the same cost, prefers Match, then Substitute, then Delete, then Insert.
//! Identical inputs always give identical operation sequences.

use serde::{Deserialize, Serialize};

use crate::textnorm::NormalizedText;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Match,
    Substitute,
    Insert,
    Delete,
}

/// One step of a character alignment. Indices are scalar positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EditOp {
    Match { ref_index: usize, hyp_index: usize, scalar: char },
    Substitute { ref_index: usize, hyp_index: usize, ref_scalar: char, hyp_scalar: char },
    Insert { hyp_index: usize, hyp_scalar: char },
    Delete { ref_index: usize, ref_scalar: char },
}

impl EditOp {
    pub fn kind(&self) -> OpKind {
        match self {
            EditOp::Match { .. } => OpKind::Match,
            EditOp::Substitute { .. } => OpKind::Substitute,
            EditOp::Insert { .. } => OpKind::Insert,
            EditOp::Delete { .. } => OpKind::Delete,
        }
    }

    pub fn is_match(&self) -> bool {
        matches!(self, EditOp::Match { .. })
    }

    pub fn ref_index(&self) -> Option<usize> {
        match *self {
            EditOp::Match { ref_index, .. }
            | EditOp::Substitute { ref_index, .. }
            | EditOp::Delete { ref_index, .. } => Some(ref_index),
            EditOp::Insert { .. } => None,
        }
    }

    pub fn hyp_index(&self) -> Option<usize> {
        match *self {
            EditOp::Match { hyp_index, .. }
            | EditOp::Substitute { hyp_index, .. }
            | EditOp::Insert { hyp_index, .. } => Some(hyp_index),
            EditOp::Delete { .. } => None,
        }
    }

    pub fn ref_scalar(&self) -> Option<char> {
        match *self {
            EditOp::Match { scalar, .. } => Some(scalar),
            EditOp::Substitute { ref_scalar, .. } | EditOp::Delete { ref_scalar, .. } => Some(ref_scalar),
            EditOp::Insert { .. } => None,
        }
    }

    pub fn hyp_scalar(&self) -> Option<char> {
        match *self {
            EditOp::Match { scalar, .. } => Some(scalar),
            EditOp::Substitute { hyp_scalar, .. } | EditOp::Insert { hyp_scalar, .. } => Some(hyp_scalar),
            EditOp::Delete { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharAlignment {
    pub ops: Vec<EditOp>,
    pub distance: usize,
    pub ref_length: usize,
    pub hyp_length: usize,
}

impl CharAlignment {
    /// Rebuilds the reference string from the operations.
    pub fn reference(&self) -> String {
        self.ops.iter().filter_map(EditOp::ref_scalar).collect()
    }

    /// Rebuilds the hypothesis string from the operations.
    pub fn hypothesis(&self) -> String {
        self.ops.iter().filter_map(EditOp::hyp_scalar).collect()
    }

    /// Number of reference and hypothesis scalars consumed before each op.
    /// Entry `k` is the cursor position just before `ops[k]`.
    pub fn cursors(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.ops.len());
        let (mut r, mut h) = (0, 0);
        for op in &self.ops {
            out.push((r, h));
            if op.ref_index().is_some() {
                r += 1;
            }
            if op.hyp_index().is_some() {
                h += 1;
            }
        }
        out
    }
}

/// A whitespace-delimited token with scalar offsets into its line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Scalar offset of the first character.
    pub start: usize,
    /// Scalar offset one past the last character.
    pub end: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLink {
    pub kind: OpKind,
    pub ref_token: Option<usize>,
    pub hyp_token: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAlignment {
    pub links: Vec<TokenLink>,
    pub word_distance: usize,
}

/// A maximal run of consecutive non-Match operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorSpan {
    /// First reference position touched by the run (inclusive).
    pub start_ref: usize,
    /// Last reference position touched by the run (inclusive).
    pub end_ref: usize,
    pub op_count: usize,
}

/// Raw alignment step over two generic sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Step {
    pub kind: OpKind,
    pub ref_index: Option<usize>,
    pub hyp_index: Option<usize>,
}

/// Full-matrix Levenshtein DP with the fixed tie-break traceback.
pub(crate) fn align_sequences<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> (Vec<Step>, usize) {
    let n = reference.len();
    let m = hypothesis.len();
    let width = m + 1;
    let mut dp = vec![0u32; (n + 1) * width];
    for (j, cell) in dp[..width].iter_mut().enumerate() {
        *cell = j as u32;
    }
    for i in 1..=n {
        let row = i * width;
        let prev = row - width;
        dp[row] = i as u32;
        let r = &reference[i - 1];
        for j in 1..=m {
            let diag = dp[prev + j - 1] + u32::from(*r != hypothesis[j - 1]);
            let up = dp[prev + j] + 1;
            let left = dp[row + j - 1] + 1;
            dp[row + j] = diag.min(up).min(left);
        }
    }

    let distance = dp[n * width + m] as usize;
    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 {
            let diag = dp[(i - 1) * width + j - 1];
            let same = reference[i - 1] == hypothesis[j - 1];
            if same && diag == here {
                steps.push(Step { kind: OpKind::Match, ref_index: Some(i - 1), hyp_index: Some(j - 1) });
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && diag + 1 == here {
                steps.push(Step { kind: OpKind::Substitute, ref_index: Some(i - 1), hyp_index: Some(j - 1) });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * width + j] + 1 == here {
            steps.push(Step { kind: OpKind::Delete, ref_index: Some(i - 1), hyp_index: None });
            i -= 1;
        } else {
            steps.push(Step { kind: OpKind::Insert, ref_index: None, hyp_index: Some(j - 1) });
            j -= 1;
        }
    }
    steps.reverse();
    (steps, distance)
}

/// Aligns two scalar sequences. Works on any input, normalized or not.
pub fn align_scalars(reference: &[char], hypothesis: &[char]) -> CharAlignment {
    let (steps, distance) = align_sequences(reference, hypothesis);
    let ops = steps
        .into_iter()
        .map(|s| match s.kind {
            OpKind::Match => {
                let (ri, hi) = (s.ref_index.unwrap(), s.hyp_index.unwrap());
                EditOp::Match { ref_index: ri, hyp_index: hi, scalar: reference[ri] }
            }
            OpKind::Substitute => {
                let (ri, hi) = (s.ref_index.unwrap(), s.hyp_index.unwrap());
                EditOp::Substitute {
                    ref_index: ri,
                    hyp_index: hi,
                    ref_scalar: reference[ri],
                    hyp_scalar: hypothesis[hi],
                }
            }
            OpKind::Insert => {
                let hi = s.hyp_index.unwrap();
                EditOp::Insert { hyp_index: hi, hyp_scalar: hypothesis[hi] }
            }
            OpKind::Delete => {
                let ri = s.ref_index.unwrap();
                EditOp::Delete { ref_index: ri, ref_scalar: reference[ri] }
            }
        })
        .collect();
    CharAlignment { ops, distance, ref_length: reference.len(), hyp_length: hypothesis.len() }
}

pub fn char_align(reference: &NormalizedText, hypothesis: &NormalizedText) -> CharAlignment {
    align_scalars(&reference.scalars(), &hypothesis.scalars())
}

/// Unit-cost edit distance between two strings, by scalar.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    align_sequences(&a, &b).1
}

/// Splits normalized text on single spaces. Punctuation stays attached.
pub fn tokenize(text: &NormalizedText) -> Vec<Token> {
    let mut tokens = Vec::new();
    if text.is_empty() {
        return tokens;
    }
    let mut start = 0;
    for piece in text.as_str().split(' ') {
        let len = piece.chars().count();
        tokens.push(Token { text: piece.to_owned(), start, end: start + len });
        start += len + 1;
    }
    tokens
}

pub fn token_align(ref_tokens: &[Token], hyp_tokens: &[Token]) -> TokenAlignment {
    let r: Vec<&str> = ref_tokens.iter().map(|t| t.text.as_str()).collect();
    let h: Vec<&str> = hyp_tokens.iter().map(|t| t.text.as_str()).collect();
    let (steps, word_distance) = align_sequences(&r, &h);
    TokenAlignment {
        links: steps
            .into_iter()
            .map(|s| TokenLink { kind: s.kind, ref_token: s.ref_index, hyp_token: s.hyp_index })
            .collect(),
        word_distance,
    }
}

/// Maximal runs of non-Match ops. An insertion is placed at the reference
/// position preceding it (position 0 at the start of a line).
pub fn error_spans(alignment: &CharAlignment) -> Vec<ErrorSpan> {
    let mut spans = Vec::new();
    let mut current: Option<ErrorSpan> = None;
    let mut consumed = 0usize;
    for op in &alignment.ops {
        if op.is_match() {
            if let Some(span) = current.take() {
                spans.push(span);
            }
            consumed += 1;
            continue;
        }
        let pos = match op.ref_index() {
            Some(i) => i,
            None => consumed.saturating_sub(1),
        };
        if op.ref_index().is_some() {
            consumed += 1;
        }
        match current.as_mut() {
            Some(span) => {
                span.start_ref = span.start_ref.min(pos);
                span.end_ref = span.end_ref.max(pos);
                span.op_count += 1;
            }
            None => current = Some(ErrorSpan { start_ref: pos, end_ref: pos, op_count: 1 }),
        }
    }
    spans.extend(current);
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::normalize;
    use proptest::prelude::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    /// Exponential recursive edit distance; independent of the DP.
    fn naive(a: &[char], b: &[char]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = naive(ra, rb) + usize::from(x != y);
                let del = naive(ra, b) + 1;
                let ins = naive(a, rb) + 1;
                sub.min(del).min(ins)
            }
        }
    }

    #[test]
    fn long_s_substitution() {
        let a = char_align(&normalize("futurity"), &normalize("ſuturity"));
        assert_eq!(a.distance, 1);
        let errors: Vec<_> = a.ops.iter().filter(|o| !o.is_match()).collect();
        assert_eq!(errors, vec![&EditOp::Substitute { ref_index: 0, hyp_index: 0, ref_scalar: 'f', hyp_scalar: 'ſ' }]);
    }

    #[test]
    fn identity_is_all_matches() {
        let a = char_align(&normalize("abc"), &normalize("abc"));
        assert_eq!(a.distance, 0);
        assert_eq!(a.ops.len(), 3);
        assert!(a.ops.iter().all(EditOp::is_match));
    }

    #[test]
    fn kitten_sitting() {
        // naive oracle: 3
        assert_eq!(naive(&chars("kitten"), &chars("sitting")), 3);
        let a = char_align(&normalize("kitten"), &normalize("sitting"));
        assert_eq!(a.distance, 3);
    }

    #[test]
    fn both_empty() {
        let a = align_scalars(&[], &[]);
        assert!(a.ops.is_empty());
        assert_eq!(a.distance, 0);
    }

    #[test]
    fn tie_break_prefers_substitute_then_delete() {
        // "ab" -> "b": delete 'a' (no tie with substitute possible at distance 1)
        let a = align_scalars(&chars("ab"), &chars("b"));
        assert_eq!(a.ops[0].kind(), OpKind::Delete);
        // "a" -> "bc": Insert b then Substitute a->c (substitute wins at the last cell)
        let a = align_scalars(&chars("a"), &chars("bc"));
        let kinds: Vec<_> = a.ops.iter().map(EditOp::kind).collect();
        assert_eq!(kinds, vec![OpKind::Insert, OpKind::Substitute]);
        // "ab" -> "c": Delete a, Substitute b->c
        let a = align_scalars(&chars("ab"), &chars("c"));
        let kinds: Vec<_> = a.ops.iter().map(EditOp::kind).collect();
        assert_eq!(kinds, vec![OpKind::Delete, OpKind::Substitute]);
    }

    #[test]
    fn tokenize_keeps_punctuation() {
        let toks = tokenize(&normalize("ſummon it, 322."));
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, vec!["ſummon", "it,", "322."]);
        assert_eq!((toks[1].start, toks[1].end), (7, 10));
        assert!(tokenize(&normalize("")).is_empty());
        let texts: Vec<_> = tokenize(&normalize("a b")).into_iter().map(|t| t.text).collect();
        assert_eq!(texts, vec!["a", "b"]);
    }

    fn toks(words: &[&str]) -> Vec<Token> {
        tokenize(&normalize(&words.join(" ")))
    }

    #[test]
    fn token_alignment_examples() {
        assert_eq!(token_align(&toks(&["the", "cat"]), &toks(&["the", "cat"])).word_distance, 0);

        let ta = token_align(&toks(&["tarded", "not"]), &toks(&["seemed", "not"]));
        assert_eq!(ta.word_distance, 1);
        assert_eq!(ta.links[0], TokenLink { kind: OpKind::Substitute, ref_token: Some(0), hyp_token: Some(0) });

        let ta = token_align(&toks(&["a", "b", "c"]), &toks(&["a", "c"]));
        assert_eq!(ta.word_distance, 1);
        assert!(ta.links.contains(&TokenLink { kind: OpKind::Delete, ref_token: Some(1), hyp_token: None }));
    }

    #[test]
    fn spans_are_maximal_runs() {
        // M S S M D over "abcde" -> "axyd"
        let a = align_scalars(&chars("abcde"), &chars("axyd"));
        let kinds: Vec<_> = a.ops.iter().map(EditOp::kind).collect();
        assert_eq!(kinds, vec![OpKind::Match, OpKind::Substitute, OpKind::Substitute, OpKind::Match, OpKind::Delete]);
        let spans = error_spans(&a);
        assert_eq!(
            spans,
            vec![
                ErrorSpan { start_ref: 1, end_ref: 2, op_count: 2 },
                ErrorSpan { start_ref: 4, end_ref: 4, op_count: 1 },
            ]
        );

        assert!(error_spans(&align_scalars(&chars("abc"), &chars("abc"))).is_empty());

        let spans = error_spans(&align_scalars(&chars("abcdef"), &chars("axcxef")));
        assert_eq!(
            spans,
            vec![
                ErrorSpan { start_ref: 1, end_ref: 1, op_count: 1 },
                ErrorSpan { start_ref: 3, end_ref: 3, op_count: 1 },
            ]
        );
    }

    #[test]
    fn insertion_attaches_to_preceding_reference_position() {
        let spans = error_spans(&align_scalars(&chars("ab"), &chars("aXb")));
        assert_eq!(spans, vec![ErrorSpan { start_ref: 0, end_ref: 0, op_count: 1 }]);
        let spans = error_spans(&align_scalars(&chars(""), &chars("xy")));
        assert_eq!(spans, vec![ErrorSpan { start_ref: 0, end_ref: 0, op_count: 2 }]);
    }

    fn small_string() -> impl Strategy<Value = Vec<char>> {
        prop::collection::vec(prop::sample::select(vec!['a', 'b', 'c', 'ſ', ' ', 'f']), 0..9)
    }

    proptest! {
        #[test]
        fn distance_matches_naive(a in small_string(), b in small_string()) {
            prop_assert_eq!(align_scalars(&a, &b).distance, naive(&a, &b));
        }

        #[test]
        fn replay_reconstructs_both_sides(a in small_string(), b in small_string()) {
            let al = align_scalars(&a, &b);
            prop_assert_eq!(al.reference(), a.iter().collect::<String>());
            prop_assert_eq!(al.hypothesis(), b.iter().collect::<String>());
            let non_match = al.ops.iter().filter(|o| !o.is_match()).count();
            prop_assert_eq!(non_match, al.distance);
        }

        #[test]
        fn op_invariants(a in small_string(), b in small_string()) {
            let al = align_scalars(&a, &b);
            let (mut last_r, mut last_h) = (None, None);
            for op in &al.ops {
                match *op {
                    EditOp::Match { ref_index, hyp_index, scalar } => {
                        prop_assert_eq!(a[ref_index], scalar);
                        prop_assert_eq!(b[hyp_index], scalar);
                    }
                    EditOp::Substitute { ref_scalar, hyp_scalar, .. } => {
                        prop_assert_ne!(ref_scalar, hyp_scalar);
                    }
                    _ => {}
                }
                if let Some(r) = op.ref_index() {
                    prop_assert!(last_r.is_none_or(|l| r > l));
                    last_r = Some(r);
                }
                if let Some(h) = op.hyp_index() {
                    prop_assert!(last_h.is_none_or(|l| h > l));
                    last_h = Some(h);
                }
            }
        }

        #[test]
        fn distance_is_symmetric(a in small_string(), b in small_string()) {
            let ab = align_scalars(&a, &b);
            let ba = align_scalars(&b, &a);
            prop_assert_eq!(ab.distance, ba.distance);
            let count = |al: &CharAlignment, k| al.ops.iter().filter(|o| o.kind() == k).count();
            // insert/delete counts need not swap op-for-op under a fixed
            // tie-break, but their difference is fixed by the lengths
            prop_assert_eq!(
                count(&ab, OpKind::Insert) as isize - count(&ab, OpKind::Delete) as isize,
                count(&ba, OpKind::Delete) as isize - count(&ba, OpKind::Insert) as isize
            );
        }

        #[test]
        fn triangle_inequality(a in small_string(), b in small_string(), c in small_string()) {
            let ab = align_scalars(&a, &b).distance;
            let bc = align_scalars(&b, &c).distance;
            let ac = align_scalars(&a, &c).distance;
            prop_assert!(ac <= ab + bc);
        }

        #[test]
        fn span_op_counts_sum_to_distance(a in small_string(), b in small_string()) {
            let al = align_scalars(&a, &b);
            let spans = error_spans(&al);
            prop_assert_eq!(spans.iter().map(|s| s.op_count).sum::<usize>(), al.distance);
            for w in spans.windows(2) {
                prop_assert!(w[0].end_ref <= w[1].start_ref);
            }
        }

        #[test]
        fn tokens_rejoin_to_text(s in "[a-cſ ,.]{0,20}") {
            let text = normalize(&s);
            let toks = tokenize(&text);
            let joined: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
            prop_assert_eq!(joined.join(" "), text.as_str());
            for t in &toks {
                prop_assert!(!t.text.contains(' '));
                prop_assert_eq!(t.end - t.start, t.text.chars().count());
            }
        }
    }
}
