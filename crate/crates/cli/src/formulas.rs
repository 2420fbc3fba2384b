//! Registry of bound formulas addressable by id from `genbound bound`.

use genbound::bounds_rademacher as br;
use genbound::bounds_vc as bv;
use genbound::covering::{nn_entropy, vc_entropy, EntropyEstimate, EntropyKind};
use genbound::mixing::{beta_exact_discrete, choose_block_size, markov_beta_of_lag, stationary_distribution};
use genbound::rademacher::rademacher_cover_bound;
use genbound::BoundParams;
use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};

use crate::failure::Failure;
use crate::schema::{opt, req, Field, Ty};

/// Primary value plus optional structured detail.
pub type Evaluation = (f64, Option<Value>);

pub struct Formula {
    pub id: &'static str,
    pub summary: &'static str,
    pub fields: &'static [Field],
    eval: fn(&Args) -> Result<Evaluation, Failure>,
}

impl Formula {
    /// Evaluates on a document that already passed [`crate::schema::violations`].
    pub fn evaluate(&self, doc: &Value) -> Result<Evaluation, Failure> {
        let map = doc.as_object().ok_or_else(|| Failure::invalid("parameters must be an object"))?;
        (self.eval)(&Args(map))
    }
}

pub struct Args<'a>(&'a Map<String, Value>);

impl Args<'_> {
    fn num(&self, key: &str) -> f64 {
        self.0[key].as_f64().expect("schema-checked number")
    }

    fn count(&self, key: &str) -> usize {
        self.0[key].as_u64().expect("schema-checked integer") as usize
    }

    fn flag(&self, key: &str) -> bool {
        self.0.get(key).and_then(Value::as_bool).unwrap_or(false)
    }

    fn parse<T: DeserializeOwned>(&self, key: &str) -> Result<T, Failure> {
        serde_json::from_value(self.0[key].clone()).map_err(|e| Failure::invalid(format!("{key}: {e}")))
    }

    fn bound_params(&self) -> Result<BoundParams, Failure> {
        Ok(BoundParams::new(self.count("n"), self.num("B"), self.num("delta"), self.num("c"), self.num("lambda"))?)
    }

    fn entropy(&self) -> Result<EntropyEstimate, Failure> {
        Ok(match self.parse::<EntropyKind>("entropy")? {
            EntropyKind::Vc { v, b } => EntropyEstimate::vc(v, b)?,
            EntropyKind::NeuralNet { d, units, b } => EntropyEstimate::neural_net(d, units, b)?,
            EntropyKind::Custom { .. } => {
                return Err(Failure::invalid("entropy: custom estimates cannot be described in JSON; use vc or neural_net"))
            }
        })
    }
}

fn value(v: genbound::Result<f64>) -> Result<Evaluation, Failure> {
    Ok((v?, None))
}

fn detailed<T: serde::Serialize>(bound: f64, detail: &T) -> Result<Evaluation, Failure> {
    Ok((bound, Some(serde_json::to_value(detail).map_err(|e| Failure::Compute(e.to_string()))?)))
}

use Ty::{Array, Bool, Count, Number, Object};

const N: Field = req("n", Count);
const B: Field = req("B", Number);
const DELTA: Field = req("delta", Number);
const C: Field = req("c", Number);
const LAMBDA: Field = req("lambda", Number);

pub static FORMULAS: &[Formula] = &[
    Formula {
        id: "rademacher_ci",
        summary: "2 (env sqrt(2 log(2/delta)) + rad), halved envelope term for nonnegative families",
        fields: &[N, req("envelope_l2_sup", Number), req("rad", Number), DELTA, opt("nonnegative_family", Bool)],
        eval: |a| {
            value(br::rademacher_ci(&br::RademacherCIInputs {
                n: a.count("n"),
                envelope_l2_sup: a.num("envelope_l2_sup"),
                rad: a.num("rad"),
                delta: a.num("delta"),
                nonnegative_family: a.flag("nonnegative_family"),
            }))
        },
    },
    Formula {
        id: "rademacher_ci_massart",
        summary: "rademacher_ci with the complexity replaced by a cover-based bound",
        fields: &[N, req("envelope_l2_sup", Number), DELTA, req("r", Number), req("mean_sqrt_log_cover", Number)],
        eval: |a| {
            value(br::rademacher_ci_massart(
                a.count("n"),
                a.num("envelope_l2_sup"),
                a.num("delta"),
                a.num("r"),
                a.num("mean_sqrt_log_cover"),
            ))
        },
    },
    Formula {
        id: "deviation_tail",
        summary: "tail probability of the supremum deviation at level eps",
        fields: &[req("eps", Number), req("envelope_l2_sup", Number), opt("nonnegative", Bool)],
        eval: |a| value(br::deviation_tail(a.num("eps"), a.num("envelope_l2_sup"), a.flag("nonnegative"))),
    },
    Formula {
        id: "single_hypothesis_tail",
        summary: "Hoeffding tail of one fixed function",
        fields: &[req("eta", Number), req("h_l2_sup", Number)],
        eval: |a| value(br::single_hypothesis_tail(a.num("eta"), a.num("h_l2_sup"))),
    },
    Formula {
        id: "conditional_k_bound",
        summary: "threshold and tail conditional on k_h = k; `bound` is the threshold",
        fields: &[
            req("eps", Number),
            req("eta", Number),
            req("k", Count),
            N,
            req("envelope_l2_sup", Number),
            req("rad", Number),
            req("single_tail", Number),
        ],
        eval: |a| {
            let b = br::conditional_k_bound(
                a.num("eps"),
                a.num("eta"),
                a.count("k"),
                a.count("n"),
                a.num("envelope_l2_sup"),
                a.num("rad"),
                a.num("single_tail"),
            )?;
            detailed(b.threshold, &b)
        },
    },
    Formula {
        id: "cover_term_from_entropy",
        summary: "cover-based complexity bound driven by an entropy estimate",
        fields: &[req("entropy", Object), req("r", Number), N],
        eval: |a| value(br::cover_term_from_entropy(&a.entropy()?, a.num("r"), a.count("n"))),
    },
    Formula {
        id: "nn_generalization_ci",
        summary: "excess-risk bound for lasso-constrained one-hidden-layer networks",
        fields: &[N, req("d", Count), B, DELTA, opt("improved", Bool)],
        eval: |a| value(br::nn_generalization_ci(a.count("n"), a.count("d"), a.num("B"), a.num("delta"), a.flag("improved"))),
    },
    Formula {
        id: "mixing_block_count",
        summary: "block count for exponentially beta-mixing data",
        fields: &[N, DELTA, req("rate_r", Number)],
        eval: |a| value(br::mixing_block_count(a.count("n"), a.num("delta"), a.num("rate_r")).map(|m| m as f64)),
    },
    Formula {
        id: "mixing_rademacher_ci",
        summary: "rademacher_ci over blocks of exponentially beta-mixing data",
        fields: &[N, DELTA, req("rate_r", Number), req("max_block_env", Number), req("max_block_rad", Number)],
        eval: |a| {
            value(br::mixing_rademacher_ci(
                a.count("n"),
                a.num("delta"),
                a.num("rate_r"),
                a.num("max_block_env"),
                a.num("max_block_rad"),
            ))
        },
    },
    Formula {
        id: "rademacher_cover_bound",
        summary: "Rademacher complexity bound from an L1 cover of the given size",
        fields: &[req("envelope_l2", Number), req("r", Number), N, req("cover_size", Count)],
        eval: |a| value(rademacher_cover_bound(a.num("envelope_l2"), a.num("r"), a.count("n"), a.count("cover_size"))),
    },
    Formula {
        id: "vc_entropy",
        summary: "uniform log covering number estimate for a VC class",
        fields: &[req("v", Count), B, req("r", Number)],
        eval: |a| value(vc_entropy(a.count("v"), a.num("B"), a.num("r"))),
    },
    Formula {
        id: "nn_entropy",
        summary: "uniform log covering number estimate for lasso networks",
        fields: &[req("d", Count), req("units", Count), B, req("r", Number)],
        eval: |a| value(nn_entropy(a.count("d"), a.count("units"), a.num("B"), a.num("r"))),
    },
    Formula {
        id: "epsilon_n",
        summary: "fixed point eps_n of the least-squares bound",
        fields: &[N, B, DELTA, C, LAMBDA],
        eval: |a| value(bv::epsilon_n(&a.bound_params()?)),
    },
    Formula {
        id: "epsilon_n_upper",
        summary: "closed-form upper bound on eps_n",
        fields: &[N, B, DELTA, C, LAMBDA],
        eval: |a| value(bv::epsilon_n_upper(&a.bound_params()?)),
    },
    Formula {
        id: "b_coeff",
        summary: "exponent coefficient b(c, lambda, B)",
        fields: &[N, B, DELTA, C, LAMBDA],
        eval: |a| value(bv::b_coeff(&a.bound_params()?)),
    },
    Formula {
        id: "a_of_sample",
        summary: "A = a(c) * cover size",
        fields: &[req("cover_size", Count), C],
        eval: |a| value(bv::a_of_sample(a.count("cover_size"), a.num("c"))),
    },
    Formula {
        id: "radius_a",
        summary: "covering radius entering A at level eps",
        fields: &[N, B, DELTA, C, LAMBDA, req("eps", Number)],
        eval: |a| value(bv::radius_a(&a.bound_params()?, a.num("eps"))),
    },
    Formula {
        id: "log_a_from_entropy",
        summary: "log A with the cover size replaced by an entropy estimate",
        fields: &[N, B, DELTA, C, LAMBDA, req("eps", Number), req("entropy", Object)],
        eval: |a| value(bv::log_a_from_entropy(&a.bound_params()?, a.num("eps"), &a.entropy()?)),
    },
    Formula {
        id: "vc_second_term",
        summary: "max(eps_n, (log A + log(2/delta)) / (n b))",
        fields: &[N, B, DELTA, C, LAMBDA, req("log_a", Number)],
        eval: |a| value(bv::vc_second_term(&a.bound_params()?, a.num("log_a"))),
    },
    Formula {
        id: "v_function",
        summary: "constant V(c, lambda)",
        fields: &[C, LAMBDA],
        eval: |a| value(bv::v_function(a.num("c"), a.num("lambda"))),
    },
    Formula {
        id: "optimized_bound",
        summary: "bound at the optimized constants (c0, lambda0)",
        fields: &[N, B, DELTA, req("log_cover", Number)],
        eval: |a| value(bv::optimized_bound(a.count("n"), a.num("B"), a.num("delta"), a.num("log_cover"))),
    },
    Formula {
        id: "small_lambda_bound",
        summary: "bound with c = C(lambda), for lambda close to 1",
        fields: &[N, B, DELTA, LAMBDA, req("log_cover", Number)],
        eval: |a| {
            value(bv::small_lambda_bound(a.count("n"), a.num("B"), a.num("delta"), a.num("lambda"), a.num("log_cover")))
        },
    },
    Formula {
        id: "c_of_lambda",
        summary: "C(lambda), tending to 1 as lambda -> 1",
        fields: &[LAMBDA],
        eval: |a| value(bv::c_of_lambda(a.num("lambda"))),
    },
    Formula {
        id: "refined_bound",
        summary: "n^(-1/2) rate bound with growing truncation level B_n",
        fields: &[N, req("B_n", Number), DELTA, req("c_n", Number), req("entropy", Object)],
        eval: |a| {
            let r = bv::refined_bound(a.count("n"), a.num("B_n"), a.num("delta"), a.num("c_n"), &a.entropy()?)?;
            detailed(r.value, &r)
        },
    },
    Formula {
        id: "bounded_class_remainder",
        summary: "bounded_class_ci without the approximation term",
        fields: &[N, B, DELTA, C, LAMBDA, req("log_a", Number)],
        eval: |a| value(bv::bounded_class_remainder(&a.bound_params()?, a.num("log_a"))),
    },
    Formula {
        id: "bounded_class_ci",
        summary: "(6 lambda - 5) inf_risk + 6 max(eps_n, ...) for bounded responses",
        fields: &[N, B, DELTA, C, LAMBDA, req("inf_risk", Number), req("log_a", Number)],
        eval: |a| value(bv::bounded_class_ci(&a.bound_params()?, a.num("inf_risk"), a.num("log_a"))),
    },
    Formula {
        id: "unbounded_response_ci",
        summary: "bounded_class_ci lifted to untruncated responses",
        fields: &[
            req("eta", Number),
            req("eta_prime", Number),
            LAMBDA,
            req("inf_risk_phi", Number),
            req("tail_term", Number),
            req("remainder", Number),
        ],
        eval: |a| {
            value(bv::unbounded_response_ci(
                a.num("eta"),
                a.num("eta_prime"),
                a.num("lambda"),
                a.num("inf_risk_phi"),
                a.num("tail_term"),
                a.num("remainder"),
            ))
        },
    },
    Formula {
        id: "vc_mixing_second_term",
        summary: "second term for exponentially beta-mixing data",
        fields: &[N, B, DELTA, C, LAMBDA, req("rate_r", Number), req("log_a_star", Number)],
        eval: |a| {
            let t = bv::vc_mixing_second_term(&a.bound_params()?, a.num("rate_r"), a.num("log_a_star"))?;
            detailed(t.value, &t)
        },
    },
    Formula {
        id: "choose_block_size",
        summary: "smallest m with n r^(-m) <= delta/2",
        fields: &[N, DELTA, req("rate_r", Number)],
        eval: |a| value(choose_block_size(a.count("n"), a.num("delta"), a.num("rate_r")).map(|m| m as f64)),
    },
    Formula {
        id: "markov_beta_of_lag",
        summary: "beta coefficient at lag m of a stationary finite Markov chain",
        fields: &[req("transition", Array), req("m", Count)],
        eval: |a| {
            let p: Vec<Vec<f64>> = a.parse("transition")?;
            let pi = stationary_distribution(&p)?;
            let beta = markov_beta_of_lag(&p, &pi, a.count("m"))?;
            Ok((beta, Some(json!({ "stationary": pi }))))
        },
    },
    Formula {
        id: "beta_exact_discrete",
        summary: "beta coefficient of a discrete joint distribution",
        fields: &[req("joint", Array)],
        eval: |a| value(beta_exact_discrete(&a.parse::<Vec<Vec<f64>>>("joint")?)),
    },
];

pub fn find(id: &str) -> Option<&'static Formula> {
    FORMULAS.iter().find(|f| f.id == id)
}
