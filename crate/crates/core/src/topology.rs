//! Who holds what: hospitals own samples and labels, omics centers own
//! feature subsets, and the federator coordinates.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FEDERATOR_ID: u32 = 0;
/// Hospitals are numbered from 1, providers from this offset.
pub const PROVIDER_ID_BASE: u32 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hospital {
    pub id: u32,
    pub sample_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmicsCenter {
    pub id: u32,
    /// Ascending global feature indices.
    pub features: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub federator: u32,
    pub n_features: usize,
    /// Ascending by id.
    pub hospitals: Vec<Hospital>,
    pub omics_centers: Vec<OmicsCenter>,
    /// Hospital id to the providers serving its patients.
    pub serving: BTreeMap<u32, Vec<u32>>,
}

impl Topology {
    /// Splits `ids` into `n_hospitals` contiguous groups (earlier groups take
    /// the remainder) and the features into `n_providers` contiguous chunks,
    /// every provider serving every hospital.
    pub fn uniform(ids: &[u64], n_features: usize, n_hospitals: usize, n_providers: usize) -> Result<Self> {
        if n_hospitals == 0 || n_providers == 0 {
            return Err(Error::InvalidTopology("need at least one hospital and one provider".into()));
        }
        if n_providers > n_features {
            return Err(Error::InvalidTopology(format!("{n_providers} providers for {n_features} features")));
        }
        let hospitals = chunks(ids.len(), n_hospitals)
            .into_iter()
            .enumerate()
            .map(|(h, r)| Hospital { id: h as u32 + 1, sample_ids: ids[r].to_vec() })
            .collect::<Vec<_>>();
        let omics_centers: Vec<OmicsCenter> = chunks(n_features, n_providers)
            .into_iter()
            .enumerate()
            .map(|(o, r)| OmicsCenter { id: PROVIDER_ID_BASE + o as u32, features: r.collect() })
            .collect();
        let all: Vec<u32> = omics_centers.iter().map(|o| o.id).collect();
        let serving = hospitals.iter().map(|h| (h.id, all.clone())).collect();
        let t = Self { federator: FEDERATOR_ID, n_features, hospitals, omics_centers, serving };
        t.validate()?;
        Ok(t)
    }

    /// Same providers as [`Topology::uniform`], a single hospital.
    pub fn centralized(ids: &[u64], n_features: usize, n_providers: usize) -> Result<Self> {
        Self::uniform(ids, n_features, 1, n_providers)
    }

    /// Explicit provider feature subsets shared by every hospital.
    pub fn with_providers(ids: &[u64], n_features: usize, n_hospitals: usize, subsets: Vec<Vec<usize>>) -> Result<Self> {
        let mut t = Self::uniform(ids, n_features, n_hospitals, 1)?;
        t.omics_centers = subsets
            .into_iter()
            .enumerate()
            .map(|(o, mut f)| {
                f.sort_unstable();
                OmicsCenter { id: PROVIDER_ID_BASE + o as u32, features: f }
            })
            .collect();
        let all: Vec<u32> = t.omics_centers.iter().map(|o| o.id).collect();
        t.serving = t.hospitals.iter().map(|h| (h.id, all.clone())).collect();
        t.validate()?;
        Ok(t)
    }

    /// Two hospitals and three providers. One provider holds the first half
    /// of the features for everybody; the second half of each hospital's
    /// features lives at a provider dedicated to that hospital.
    pub fn shared_first_half(ids: &[u64], n_features: usize) -> Result<Self> {
        if n_features < 2 {
            return Err(Error::InvalidTopology("need at least two features".into()));
        }
        let mut t = Self::uniform(ids, n_features, 2, 1)?;
        let half = n_features / 2;
        t.omics_centers = vec![
            OmicsCenter { id: PROVIDER_ID_BASE, features: (0..half).collect() },
            OmicsCenter { id: PROVIDER_ID_BASE + 1, features: (half..n_features).collect() },
            OmicsCenter { id: PROVIDER_ID_BASE + 2, features: (half..n_features).collect() },
        ];
        t.serving = BTreeMap::from([(1, vec![PROVIDER_ID_BASE, PROVIDER_ID_BASE + 1]), (2, vec![PROVIDER_ID_BASE, PROVIDER_ID_BASE + 2])]);
        t.validate()?;
        Ok(t)
    }

    pub fn n_samples(&self) -> usize {
        self.hospitals.iter().map(|h| h.sample_ids.len()).sum()
    }

    pub fn hospital(&self, id: u32) -> Option<&Hospital> {
        self.hospitals.iter().find(|h| h.id == id)
    }

    pub fn center(&self, id: u32) -> Option<&OmicsCenter> {
        self.omics_centers.iter().find(|o| o.id == id)
    }

    /// Providers serving hospital `id`, ascending.
    pub fn providers_of(&self, id: u32) -> Vec<&OmicsCenter> {
        let mut out: Vec<&OmicsCenter> = self
            .serving
            .get(&id)
            .map(|ps| ps.iter().filter_map(|p| self.center(*p)).collect())
            .unwrap_or_default();
        out.sort_by_key(|o| o.id);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidTopology(m));
        if self.hospitals.is_empty() {
            return fail("no hospitals".into());
        }
        let mut party_ids = BTreeSet::from([self.federator]);
        for id in self.hospitals.iter().map(|h| h.id).chain(self.omics_centers.iter().map(|o| o.id)) {
            if !party_ids.insert(id) {
                return fail(format!("party id {id} used twice"));
            }
        }
        if self.hospitals.windows(2).any(|w| w[0].id >= w[1].id) {
            return fail("hospitals must be listed by ascending id".into());
        }
        let mut seen = BTreeSet::new();
        for h in &self.hospitals {
            if h.sample_ids.is_empty() {
                return fail(format!("hospital {} has no samples", h.id));
            }
            for s in &h.sample_ids {
                if !seen.insert(*s) {
                    return fail(format!("sample id {s} appears twice"));
                }
            }
        }
        for o in &self.omics_centers {
            if o.features.iter().any(|&f| f >= self.n_features) {
                return fail(format!("provider {} has a feature out of range", o.id));
            }
        }
        for h in &self.hospitals {
            let Some(ps) = self.serving.get(&h.id) else {
                return fail(format!("hospital {} has no providers", h.id));
            };
            let mut covered = vec![false; self.n_features];
            for p in ps {
                let Some(o) = self.center(*p) else {
                    return fail(format!("hospital {} served by unknown provider {p}", h.id));
                };
                for &f in &o.features {
                    if std::mem::replace(&mut covered[f], true) {
                        return fail(format!("feature {f} served twice for hospital {}", h.id));
                    }
                }
            }
            if let Some(f) = covered.iter().position(|c| !c) {
                return fail(format!("feature {f} not served for hospital {}", h.id));
            }
        }
        if self.serving.keys().any(|h| self.hospital(*h).is_none()) {
            return fail("serving map names an unknown hospital".into());
        }
        Ok(())
    }
}

fn chunks(n: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let (base, extra) = (n / parts, n % parts);
    let mut start = 0;
    (0..parts)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}
