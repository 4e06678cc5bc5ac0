#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ORIGIN: (f64, f64) = (2_600_000.0, 1_200_000.0);
pub const SIDE_M: f64 = 10_000.0;

/// Writes a small raw dataset (stations, trips, POIs, census, households,
/// manifest) into `dir` and returns the manifest path.
pub fn write_raw_inputs(dir: &Path, n_stations: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pt = |rng: &mut ChaCha8Rng| {
        (
            ORIGIN.0 + rng.random_range(0.0..SIDE_M),
            ORIGIN.1 + rng.random_range(0.0..SIDE_M),
        )
    };

    let mut stations = String::from("station_id,x,y,vehicles\n");
    let mut trips = String::from("station_id,start,duration_h,distance_km,kind\n");
    for i in 0..n_stations {
        let (x, y) = pt(&mut rng);
        let cars = rng.random_range(1..12);
        writeln!(stations, "s{i},{x},{y},{cars}").unwrap();
        let n_trips = 3 * cars + rng.random_range(0..10);
        for t in 0..n_trips {
            let day = 1 + (t % 28);
            let kind = if t % 9 == 0 { "one_way" } else { "return" };
            writeln!(trips, "s{i},2023-03-{day:02}T10:00:00,2.5,12.0,{kind}").unwrap();
        }
    }
    let mut pois = String::from("x,y,category\n");
    for k in 0..400 {
        let (x, y) = pt(&mut rng);
        let cat = ["food", "shop"][k % 2];
        writeln!(pois, "{x},{y},{cat}").unwrap();
    }
    let mut census = String::from("x,y,population\n");
    for _ in 0..500 {
        let (x, y) = pt(&mut rng);
        writeln!(census, "{x},{y},{}", rng.random_range(0..60)).unwrap();
    }
    let mut households = String::from("x,y,income\n");
    for _ in 0..120 {
        let (x, y) = pt(&mut rng);
        writeln!(households, "{x},{y},{}", rng.random_range(4_000.0..14_000.0)).unwrap();
    }
    fs::write(dir.join("stations.csv"), stations).unwrap();
    fs::write(dir.join("trips.csv"), trips).unwrap();
    fs::write(dir.join("pois.csv"), pois).unwrap();
    fs::write(dir.join("census.csv"), census).unwrap();
    fs::write(dir.join("households.csv"), households).unwrap();
    let manifest = dir.join("manifest.txt");
    fs::write(
        &manifest,
        "stations = stations.csv\n\
         trips = trips.csv\n\
         pois = pois.csv\n\
         census = census.csv\n\
         households = households.csv\n\
         window_start = 2023-03-01T00:00:00\n\
         window_end = 2023-04-01T00:00:00\n\
         unit.census.population = persons\n\
         unit.households.income = chf/month\n",
    )
    .unwrap();
    manifest
}
