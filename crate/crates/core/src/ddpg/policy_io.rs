//! Policy files: an ASCII header followed by little-endian `f64` parameters
//! of the actor, critic, target actor and target critic, in that order.
//!
//! ```text
//! uavcol-policy 1
//! a_max 10
//! n_obs 4
//! seed 7
//! scenario_hash 1234
//! actor 28 128 128 3
//! critic 31 128 128 1
//! params 41734
//! end
//! <binary payload>
//! ```

use std::io::{BufRead, Write};

use super::{Actor, Critic, PolicyParameters};
use crate::error::{Error, Result};
use crate::nn::{Mlp, OutputActivation};

const MAGIC: &str = "uavcol-policy 1";

pub fn write_policy<W: Write>(policy: &PolicyParameters, mut w: W) -> Result<()> {
    let sizes = |m: &Mlp| m.sizes().iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ");
    let total = 2 * (policy.actor.net.num_params() + policy.critic.net.num_params());
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "a_max {}", policy.actor.a_max)?;
    writeln!(w, "n_obs {}", policy.n_obs)?;
    writeln!(w, "seed {}", policy.seed)?;
    writeln!(w, "scenario_hash {}", policy.scenario_hash)?;
    writeln!(w, "actor {}", sizes(&policy.actor.net))?;
    writeln!(w, "critic {}", sizes(&policy.critic.net))?;
    writeln!(w, "params {total}")?;
    writeln!(w, "end")?;
    for net in [&policy.actor.net, &policy.critic.net, &policy.target_actor.net, &policy.target_critic.net] {
        for p in net.params() {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    Ok(())
}

fn header_value<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| Error::Parse(format!("expected `{key}` header line, got `{line}`")))
}

fn parse_num<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad value `{s}` for `{key}`")))
}

pub fn read_policy<R: BufRead>(mut r: R) -> Result<PolicyParameters> {
    let mut lines = Vec::new();
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Parse("policy header ended before `end`".into()));
        }
        let line = line.trim_end_matches('\n').to_string();
        if line == "end" {
            break;
        }
        lines.push(line);
    }
    if lines.len() != 8 || lines[0] != MAGIC {
        return Err(Error::Parse("not a uavcol policy file".into()));
    }
    let a_max: f64 = parse_num(header_value(&lines[1], "a_max")?, "a_max")?;
    let n_obs: usize = parse_num(header_value(&lines[2], "n_obs")?, "n_obs")?;
    let seed: u64 = parse_num(header_value(&lines[3], "seed")?, "seed")?;
    let scenario_hash: u64 = parse_num(header_value(&lines[4], "scenario_hash")?, "scenario_hash")?;
    let sizes = |line: &str, key: &str| -> Result<Vec<usize>> {
        header_value(line, key)?.split_whitespace().map(|t| parse_num(t, key)).collect()
    };
    let actor_sizes = sizes(&lines[5], "actor")?;
    let critic_sizes = sizes(&lines[6], "critic")?;
    let total: usize = parse_num(header_value(&lines[7], "params")?, "params")?;

    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != total * 8 {
        return Err(Error::Parse(format!("expected {} payload bytes, found {}", total * 8, bytes.len())));
    }
    let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |sizes: &[usize], act: OutputActivation| -> Result<Mlp> {
        let n: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Mlp::from_params(sizes, act, values.by_ref().take(n).collect())
    };
    let actor = take(&actor_sizes, OutputActivation::Tanh)?;
    let critic = take(&critic_sizes, OutputActivation::Identity)?;
    let target_actor = take(&actor_sizes, OutputActivation::Tanh)?;
    let target_critic = take(&critic_sizes, OutputActivation::Identity)?;
    Ok(PolicyParameters {
        actor: Actor { net: actor, a_max },
        critic: Critic { net: critic, a_max },
        target_actor: Actor { net: target_actor, a_max },
        target_critic: Critic { net: target_critic, a_max },
        n_obs,
        seed,
        scenario_hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddpg::Hyperparams;
    use crate::env::tests::open_scenario;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let hp = Hyperparams { hidden: vec![8, 8], n_obs: 2, seed: 5, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = PolicyParameters::init(&open_scenario(), &hp, &mut rng);
        let mut buf = Vec::new();
        write_policy(&policy, &mut buf).unwrap();
        let back = read_policy(buf.as_slice()).unwrap();
        assert_eq!(back, policy);
    }

    #[test]
    fn truncated_payload_rejected() {
        let hp = Hyperparams { hidden: vec![4], n_obs: 1, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = PolicyParameters::init(&open_scenario(), &hp, &mut rng);
        let mut buf = Vec::new();
        write_policy(&policy, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_policy(buf.as_slice()), Err(Error::Parse(_))));
    }
}
