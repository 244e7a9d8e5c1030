//! Frame-to-frame association with appearance and overlap, and the optimal
//! versus greedy matcher on a small affinity matrix.

use crowdpose::assignment::{greedy_max, hungarian_max, total_affinity};
use crowdpose::synth::SynthConfig;
use crowdpose::tracking::{build_tracks, AssociationParams, TrackInstance};
use crowdpose::Result;

pub fn run_example() -> Result<Vec<Vec<u64>>> {
    let cfg = SynthConfig::crossing(5, 3, 40);
    let features: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..8).map(|k| if k % 3 == i { 1.0 } else { 0.1 }).collect())
        .collect();
    let frames: Vec<Vec<TrackInstance>> = (0..cfg.frames)
        .map(|t| {
            let mut people: Vec<TrackInstance> = cfg
                .persons
                .iter()
                .zip(&features)
                .map(|(p, f)| TrackInstance::from_box(p.bbox(t).with_feature(f.clone())))
                .collect();
            // detector output order carries no identity
            people.rotate_left(t % 3);
            people
        })
        .collect();
    let tracking = build_tracks(&frames, &AssociationParams::default())?;
    println!("{} tracks over {} frames", tracking.tracks.len(), frames.len());
    for track in &tracking.tracks {
        println!("track {}: {} frames", track.id, track.entries.len());
    }

    let affinity = vec![vec![0.9, 0.8, 0.0], vec![0.85, 0.1, 0.0], vec![0.0, 0.0, 0.3]];
    let best = hungarian_max(&affinity);
    let greedy = greedy_max(&affinity);
    println!(
        "optimal {:.2} {:?}, greedy {:.2} {:?}",
        total_affinity(&affinity, &best),
        best,
        total_affinity(&affinity, &greedy),
        greedy
    );
    Ok(tracking.ids)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
