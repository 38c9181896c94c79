use crate::catalog::{tokenize, Label, ProductRecord};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Configuration of the synthetic catalog generator.
///
/// Latent attributes are drawn per product, rendered into the title through a
/// template, and emitted as task labels. The material -> weight coupling is
/// controlled by `material_weight_effect` so cross-task signal transfer can
/// be measured downstream.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogSpec {
    pub n_products: usize,
    pub groups: usize,
    pub colors: Vec<String>,
    pub materials: Vec<String>,
    pub sizes: Vec<String>,
    pub nouns: Vec<String>,
    /// materials whose products get the hazardous flag (and hazard token)
    pub hazard_materials: Vec<String>,
    /// nouns whose products get the battery flag (and battery token)
    pub battery_nouns: Vec<String>,
    pub hazard_token: String,
    pub battery_token: String,
    pub weight_range: (f64, f64),
    pub price_range: (f64, f64),
    pub views_range: (f64, f64),
    /// templates with `{color}`, `{material}`, `{size}`, `{noun}` placeholders
    pub templates: Vec<String>,
    pub noise_tokens: Vec<String>,
    /// probability per slot (3 slots) of prepending a noise token
    pub noise_rate: f64,
    /// in [0,1]: 1 means weight fully determined by material, 0 means pure noise
    pub material_weight_effect: f64,
    pub seed: u64,
}

impl Default for CatalogSpec {
    fn default() -> Self {
        CatalogSpec {
            n_products: 1000,
            groups: 1,
            colors: ["red", "blue", "green", "black", "white"]
                .map(String::from)
                .to_vec(),
            materials: ["wood", "steel", "plastic", "glass"].map(String::from).to_vec(),
            sizes: ["small", "medium", "large"].map(String::from).to_vec(),
            nouns: ["chair", "table", "lamp", "shelf", "desk", "toy"]
                .map(String::from)
                .to_vec(),
            hazard_materials: vec!["plastic".to_string()],
            battery_nouns: vec!["lamp".to_string(), "toy".to_string()],
            hazard_token: "flammable".to_string(),
            battery_token: "battery".to_string(),
            weight_range: (1.0, 50.0),
            price_range: (5.0, 500.0),
            views_range: (0.0, 1000.0),
            templates: vec![
                "{color} {material} {noun} {size}".to_string(),
                "{size} {noun} in {color} {material}".to_string(),
            ],
            noise_tokens: ["premium", "classic", "deluxe", "eco", "pro", "home"]
                .map(String::from)
                .to_vec(),
            noise_rate: 0.3,
            material_weight_effect: 0.8,
            seed: 42,
        }
    }
}

impl CatalogSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_products == 0 {
            return Err(Error::config("catalog spec: n_products must be > 0"));
        }
        if self.groups == 0 {
            return Err(Error::config("catalog spec: groups must be > 0"));
        }
        for (name, set) in [
            ("colors", &self.colors),
            ("materials", &self.materials),
            ("sizes", &self.sizes),
            ("nouns", &self.nouns),
            ("templates", &self.templates),
        ] {
            if set.is_empty() {
                return Err(Error::config(format!("catalog spec: {name} is empty")));
            }
        }
        for (name, (lo, hi)) in [
            ("weight_range", self.weight_range),
            ("price_range", self.price_range),
            ("views_range", self.views_range),
        ] {
            if !(lo < hi) {
                return Err(Error::config(format!(
                    "catalog spec: {name} ({lo}, {hi}) is degenerate or inverted"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::config("catalog spec: noise_rate must be in [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.material_weight_effect) {
            return Err(Error::config(
                "catalog spec: material_weight_effect must be in [0,1]",
            ));
        }
        Ok(())
    }

    /// Registry matching the labels this generator emits (decode target is
    /// attached separately at training time).
    pub fn task_registry_text(&self) -> String {
        format!(
            "color class {}\nmaterial class {}\nsize class {}\nhazardous class 2\nbattery class 2\nweight scalar\nprice scalar\nviews scalar\n",
            self.colors.len(),
            self.materials.len(),
            self.sizes.len()
        )
    }
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [String]) -> (usize, &'a str) {
    let i = rng.gen_range(0..items.len());
    (i, items[i].as_str())
}

/// Generate a deterministic synthetic catalog.
pub fn generate_catalog(spec: &CatalogSpec) -> Result<Vec<ProductRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.n_products.to_string().len().max(4);
    let mut records = Vec::with_capacity(spec.n_products);

    for i in 0..spec.n_products {
        let group = i % spec.groups;
        let (color_i, color) = pick(&mut rng, &spec.colors);
        let (mat_i, material) = pick(&mut rng, &spec.materials);
        let (size_i, size) = pick(&mut rng, &spec.sizes);
        let (_, noun) = pick(&mut rng, &spec.nouns);
        let hazardous = spec.hazard_materials.iter().any(|m| m == material);
        let battery = spec.battery_nouns.iter().any(|n| n == noun);

        // weight is a material band plus uniform noise
        let (wlo, whi) = spec.weight_range;
        let span = whi - wlo;
        let frac = (mat_i as f64 + 0.5) / spec.materials.len() as f64;
        let e = spec.material_weight_effect;
        let weight = wlo + span * (e * frac + (1.0 - e) * rng.gen::<f64>());

        // price carries a mild group offset so groups are distinguishable
        let (plo, phi) = spec.price_range;
        let gshift = group as f64 / spec.groups as f64 * 0.25;
        let price = plo + (phi - plo) * ((rng.gen::<f64>() * 0.75 + gshift).min(1.0));

        let (vlo, vhi) = spec.views_range;
        let views = vlo + (vhi - vlo) * rng.gen::<f64>();

        let template = &spec.templates[rng.gen_range(0..spec.templates.len())];
        let mut title = template
            .replace("{color}", color)
            .replace("{material}", material)
            .replace("{size}", size)
            .replace("{noun}", noun);
        if hazardous {
            title.push(' ');
            title.push_str(&spec.hazard_token);
        }
        if battery {
            title.push(' ');
            title.push_str(&spec.battery_token);
        }
        if !spec.noise_tokens.is_empty() {
            for _ in 0..3 {
                if rng.gen_bool(spec.noise_rate) {
                    let (_, noise) = pick(&mut rng, &spec.noise_tokens);
                    title = format!("{noise} {title}");
                }
            }
        }

        let tokens = tokenize(&title);
        debug_assert!(!tokens.is_empty());

        let mut labels = BTreeMap::new();
        labels.insert(
            "color".to_string(),
            Label::Class {
                index: color_i,
                num_classes: spec.colors.len(),
            },
        );
        labels.insert(
            "material".to_string(),
            Label::Class {
                index: mat_i,
                num_classes: spec.materials.len(),
            },
        );
        labels.insert(
            "size".to_string(),
            Label::Class {
                index: size_i,
                num_classes: spec.sizes.len(),
            },
        );
        labels.insert(
            "hazardous".to_string(),
            Label::Class {
                index: hazardous as usize,
                num_classes: 2,
            },
        );
        labels.insert(
            "battery".to_string(),
            Label::Class {
                index: battery as usize,
                num_classes: 2,
            },
        );
        labels.insert("weight".to_string(), Label::Scalar(weight));
        labels.insert("price".to_string(), Label::Scalar(price));
        labels.insert("views".to_string(), Label::Scalar(views));

        records.push(ProductRecord {
            id: format!("p{i:0width$}"),
            group,
            title,
            tokens,
            labels,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::catalog_to_string;

    fn single_outcome_spec() -> CatalogSpec {
        CatalogSpec {
            n_products: 1,
            groups: 1,
            colors: vec!["red".to_string()],
            materials: vec!["wood".to_string()],
            sizes: vec!["small".to_string()],
            nouns: vec!["chair".to_string()],
            hazard_materials: vec![],
            battery_nouns: vec![],
            templates: vec!["{color} chair".to_string()],
            noise_tokens: vec![],
            noise_rate: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn single_outcome_distribution() {
        let recs = generate_catalog(&single_outcome_spec()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].tokens, vec!["red", "chair"]);
        assert_eq!(
            recs[0].labels["color"],
            Label::Class { index: 0, num_classes: 1 }
        );
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let spec = CatalogSpec {
            n_products: 50,
            ..Default::default()
        };
        let a = catalog_to_string(&generate_catalog(&spec).unwrap()).unwrap();
        let b = catalog_to_string(&generate_catalog(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn material_weight_correlation_exceeds_half() {
        let spec = CatalogSpec {
            n_products: 2000,
            material_weight_effect: 0.8,
            ..Default::default()
        };
        let recs = generate_catalog(&spec).unwrap();
        // independent statistics pass: Pearson corr(material index, weight)
        let pairs: Vec<(f64, f64)> = recs
            .iter()
            .map(|r| {
                let m = match r.labels["material"] {
                    Label::Class { index, .. } => index as f64,
                    _ => panic!(),
                };
                let w = match r.labels["weight"] {
                    Label::Scalar(v) => v,
                    _ => panic!(),
                };
                (m, w)
            })
            .collect();
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let cov = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / n;
        let sx = (pairs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (pairs.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / n).sqrt();
        let corr = cov / (sx * sy);
        assert!(corr > 0.5, "correlation {corr}");
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = CatalogSpec::default();
        s.colors.clear();
        assert!(generate_catalog(&s).is_err());
        let mut s = CatalogSpec::default();
        s.weight_range = (5.0, 5.0);
        assert!(generate_catalog(&s).is_err());
    }

    #[test]
    fn round_trips_through_jsonl() {
        use crate::catalog::{load_catalog, TaskRegistry};
        let spec = CatalogSpec {
            n_products: 30,
            groups: 3,
            ..Default::default()
        };
        let recs = generate_catalog(&spec).unwrap();
        let registry = TaskRegistry::parse(&spec.task_registry_text()).unwrap();
        let text = catalog_to_string(&recs).unwrap();
        let loaded = load_catalog(text.as_bytes(), &registry).unwrap();
        assert_eq!(recs, loaded);
    }
}
