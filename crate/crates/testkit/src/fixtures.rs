use artsearch_core::scoring::{FusionConfig, LocalAggregation, Modality, QueryEmbedding};
use artsearch_core::store::{
    Catalog, CatalogEntry, Corpus, CorpusSide, EmbeddingMatrix, LocalEmbeddingSet,
};
use artsearch_oracle::{Item, Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

/// Items with unnormalized vectors and 1..=max_regions local vectors each.
/// Roughly one item in ten duplicates an earlier one, so exact score ties
/// occur.
pub fn random_items(rng: &mut ChaCha8Rng, n: usize, dim: usize, max_regions: usize) -> Vec<Item> {
    let mut items: Vec<Item> = Vec::with_capacity(n);
    for _ in 0..n {
        if !items.is_empty() && rng.random_bool(0.1) {
            let src = rng.random_range(0..items.len());
            items.push(items[src].clone());
            continue;
        }
        let regions = rng.random_range(1..=max_regions);
        items.push(Item {
            global: vector(rng, dim),
            locals: (0..regions).map(|_| vector(rng, dim)).collect(),
        });
    }
    items
}

pub fn side(items: &[Item], dim: usize) -> CorpusSide {
    let globals: Vec<&[f32]> = items.iter().map(|i| i.global.as_slice()).collect();
    let blocks: Vec<Vec<f32>> = items.iter().map(|i| i.locals.concat()).collect();
    CorpusSide::new(
        EmbeddingMatrix::from_rows(dim, &globals).unwrap(),
        LocalEmbeddingSet::from_blocks(dim, &blocks).unwrap(),
    )
    .unwrap()
}

pub fn catalog(n: usize) -> Catalog {
    Catalog::from_entries(
        (0..n)
            .map(|i| CatalogEntry {
                item_id: i,
                external_id: format!("x{i}"),
                description: format!("description {i}"),
                image_uri: format!("img/{i}.jpg"),
                source_url: format!("https://example.invalid/{i}"),
            })
            .collect(),
    )
    .unwrap()
}

pub fn corpus(images: &[Item], descriptions: &[Item], dim: usize) -> Corpus {
    Corpus::new(
        "test",
        side(images, dim),
        side(descriptions, dim),
        catalog(images.len()),
    )
    .unwrap()
}

pub fn query(item: &Item, modality: Modality) -> QueryEmbedding {
    QueryEmbedding::from_rows(modality, item.global.clone(), &item.locals).unwrap()
}

pub fn params(cfg: &FusionConfig) -> Params {
    Params {
        alpha: cfg.alpha,
        lambda: cfg.temperature_lambda,
        log_sum_exp: cfg.local_aggregation == LocalAggregation::LogSumExp,
    }
}

/// Oracle items read back out of a loaded corpus side.
pub fn items_from_side(side: &CorpusSide) -> Vec<Item> {
    (0..side.item_count())
        .map(|id| Item {
            global: side.global.row(id).unwrap().to_vec(),
            locals: side
                .local
                .row(id)
                .unwrap()
                .rows()
                .map(<[f32]>::to_vec)
                .collect(),
        })
        .collect()
}
