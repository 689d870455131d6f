use super::fuzzy::{Aggregate, FuzzyError, FuzzyVariable};

/// Shipped rule base. Suspicion rises with slow movement, long dwell, frequent heading
/// changes and a sensitive context; fast movement is never suspicious on its own.
///
/// Line forms: `input <name> <lo> <hi> <label>=<apex>...`, `output ...` (same shape) and
/// `rule <var>=<label>... => <label> [@<weight>]`. `#` starts a comment.
pub const DEFAULT_RULEBASE: &str = "\
# speed in px/frame, dir_change_rate in changes/s, dwell in s
input speed 0 20 low=0 medium=2 high=4
input dir_change_rate 0 1 low=0 high=0.5
input dwell 0 120 short=0 medium=10 long=20
input context_weight 1 2 low=1 high=2
output suspicion 0 1 none=0 low=0.25 medium=0.5 high=0.75 critical=1

rule speed=high => none
rule speed=medium dwell=short => low
rule speed=medium dwell=medium => low
rule speed=medium dwell=long => medium
rule speed=low dwell=short => low
rule speed=low dwell=medium => medium
rule speed=low dwell=long => high
rule speed=low dwell=long context_weight=high => critical
rule speed=medium dwell=long context_weight=high => high
rule dir_change_rate=high dwell=long => high
";

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    /// `(input index, label index)` conjunction; unlisted inputs are unconstrained.
    pub antecedent: Vec<(usize, usize)>,
    pub consequent: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleBase {
    inputs: Vec<FuzzyVariable>,
    output: FuzzyVariable,
    rules: Vec<Rule>,
}

impl RuleBase {
    /// Validates label references and weights, then checks that some rule can fire at every
    /// point of the input space.
    pub fn new(inputs: Vec<FuzzyVariable>, output: FuzzyVariable, rules: Vec<Rule>) -> Result<Self, FuzzyError> {
        if rules.is_empty() {
            return Err(FuzzyError::Rule(0, "rule base is empty".into()));
        }
        for (n, r) in rules.iter().enumerate() {
            if !(r.weight > 0.0 && r.weight <= 1.0) {
                return Err(FuzzyError::Rule(n, format!("weight {} outside (0, 1]", r.weight)));
            }
            if r.consequent >= output.labels().len() {
                return Err(FuzzyError::Rule(n, "unknown consequent label".into()));
            }
            for (k, &(v, l)) in r.antecedent.iter().enumerate() {
                if v >= inputs.len() || l >= inputs[v].labels().len() {
                    return Err(FuzzyError::Rule(n, "unknown antecedent label".into()));
                }
                if r.antecedent[..k].iter().any(|&(pv, _)| pv == v) {
                    return Err(FuzzyError::Rule(n, "input constrained twice".into()));
                }
            }
        }
        let rb = RuleBase { inputs, output, rules };
        rb.check_coverage()?;
        Ok(rb)
    }

    // At each label's apex only that label is non-zero, so full coverage is equivalent to
    // every combination of one label per input matching some rule.
    fn check_coverage(&self) -> Result<(), FuzzyError> {
        let sizes: Vec<usize> = self.inputs.iter().map(|v| v.labels().len()).collect();
        let mut combo = vec![0usize; sizes.len()];
        loop {
            let covered = self
                .rules
                .iter()
                .any(|r| r.antecedent.iter().all(|&(v, l)| combo[v] == l));
            if !covered {
                let names = combo
                    .iter()
                    .enumerate()
                    .map(|(v, &l)| format!("{}={}", self.inputs[v].name(), self.inputs[v].labels()[l]))
                    .collect();
                return Err(FuzzyError::Uncovered(names));
            }
            let mut k = 0;
            loop {
                if k == combo.len() {
                    return Ok(());
                }
                combo[k] += 1;
                if combo[k] < sizes[k] {
                    break;
                }
                combo[k] = 0;
                k += 1;
            }
        }
    }

    pub fn inputs(&self) -> &[FuzzyVariable] {
        &self.inputs
    }

    pub fn output(&self) -> &FuzzyVariable {
        &self.output
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|v| v.name() == name)
    }

    /// Mamdani inference: min over antecedent degrees, scaled by the rule weight, then
    /// max-aggregated per consequent label. `degrees[v]` holds the fuzzified input `v`.
    pub fn infer(&self, degrees: &[Vec<f64>]) -> Result<Aggregate<'_>, FuzzyError> {
        assert_eq!(degrees.len(), self.inputs.len(), "one degree vector per input");
        let mut heights = vec![0.0; self.output.labels().len()];
        for r in &self.rules {
            let strength = r
                .antecedent
                .iter()
                .map(|&(v, l)| degrees[v][l])
                .fold(1.0, f64::min)
                * r.weight;
            if strength > heights[r.consequent] {
                heights[r.consequent] = strength;
            }
        }
        if heights.iter().all(|&h| h <= 0.0) {
            return Err(FuzzyError::NoRuleFired);
        }
        Ok(Aggregate::new(&self.output, heights))
    }

    /// Fuzzifies crisp inputs (by input index) and runs [`RuleBase::infer`].
    pub fn infer_crisp(&self, values: &[f64]) -> Result<Aggregate<'_>, FuzzyError> {
        let degrees: Vec<Vec<f64>> = self
            .inputs
            .iter()
            .zip(values)
            .map(|(v, &x)| v.degrees(x))
            .collect();
        self.infer(&degrees)
    }

    pub fn parse(text: &str) -> Result<Self, FuzzyError> {
        let mut inputs = Vec::new();
        let mut output = None;
        let mut pending_rules = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (kind, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            match kind {
                "input" | "output" => {
                    let var = parse_variable(rest, line_no)?;
                    if kind == "input" {
                        inputs.push(var);
                    } else if output.replace(var).is_some() {
                        return Err(FuzzyError::Parse(line_no, "second output variable".into()));
                    }
                }
                "rule" => pending_rules.push((line_no, rest.to_string())),
                other => return Err(FuzzyError::Parse(line_no, format!("unknown directive {other:?}"))),
            }
        }
        let output = output.ok_or_else(|| FuzzyError::Parse(0, "no output variable".into()))?;
        let mut rules = Vec::new();
        for (line_no, rest) in pending_rules {
            rules.push(parse_rule(&rest, line_no, &inputs, &output)?);
        }
        RuleBase::new(inputs, output, rules)
    }

    pub fn default_rules() -> Self {
        RuleBase::parse(DEFAULT_RULEBASE).expect("default rule base is valid")
    }
}

fn parse_num(s: &str, line: usize) -> Result<f64, FuzzyError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| FuzzyError::Parse(line, format!("bad number {s:?}")))
}

fn parse_variable(rest: &str, line: usize) -> Result<FuzzyVariable, FuzzyError> {
    let toks: Vec<&str> = rest.split_whitespace().collect();
    if toks.len() < 4 {
        return Err(FuzzyError::Parse(line, "expected <name> <lo> <hi> <label>=<apex>...".into()));
    }
    let lo = parse_num(toks[1], line)?;
    let hi = parse_num(toks[2], line)?;
    let mut labels = Vec::new();
    for t in &toks[3..] {
        let (l, a) = t
            .split_once('=')
            .ok_or_else(|| FuzzyError::Parse(line, format!("expected label=apex, got {t:?}")))?;
        labels.push((l, parse_num(a, line)?));
    }
    FuzzyVariable::new(toks[0], lo, hi, &labels)
}

fn parse_rule(rest: &str, line: usize, inputs: &[FuzzyVariable], output: &FuzzyVariable) -> Result<Rule, FuzzyError> {
    let (lhs, rhs) = rest
        .split_once("=>")
        .ok_or_else(|| FuzzyError::Parse(line, "rule needs =>".into()))?;
    let mut antecedent = Vec::new();
    for term in lhs.split_whitespace() {
        let (var, label) = term
            .split_once('=')
            .ok_or_else(|| FuzzyError::Parse(line, format!("expected var=label, got {term:?}")))?;
        let v = inputs
            .iter()
            .position(|i| i.name() == var)
            .ok_or_else(|| FuzzyError::Parse(line, format!("unknown input {var:?}")))?;
        let l = inputs[v]
            .label_index(label)
            .ok_or_else(|| FuzzyError::Parse(line, format!("unknown label {label:?} on {var}")))?;
        antecedent.push((v, l));
    }
    let mut rhs_toks = rhs.split_whitespace();
    let label = rhs_toks
        .next()
        .ok_or_else(|| FuzzyError::Parse(line, "missing consequent".into()))?;
    let consequent = output
        .label_index(label)
        .ok_or_else(|| FuzzyError::Parse(line, format!("unknown output label {label:?}")))?;
    let weight = match rhs_toks.next() {
        None => 1.0,
        Some(w) => parse_num(
            w.strip_prefix('@')
                .ok_or_else(|| FuzzyError::Parse(line, "weight must be written @<w>".into()))?,
            line,
        )?,
    };
    if rhs_toks.next().is_some() {
        return Err(FuzzyError::Parse(line, "trailing tokens".into()));
    }
    Ok(Rule {
        antecedent,
        consequent,
        weight,
    })
}
