//! The transducer loss on a random grid: forward/backward lattice, path
//! enumeration and the occupancy gradient.

use codemix_rnnt::loss::{brute_force_nll, enumerate_paths, lattice, transducer_grad, transducer_nll};
use codemix_rnnt::model::PosteriorGrid;
use codemix_rnnt::numerics::{log_softmax_in_place, ParamRng};

fn main() -> codemix_rnnt::Result<()> {
    let (frames, labels, symbols, blank) = (4, vec![0usize, 2, 1], 4, 3);
    let positions = labels.len() + 1;
    let mut data = ParamRng::new(7).uniform(&[frames * positions, symbols], 2.0).into_data();
    for row in data.chunks_mut(symbols) {
        log_softmax_in_place(row);
    }
    let grid = PosteriorGrid::new(frames, positions, symbols, blank, data)?;

    let lat = lattice(&grid, &labels)?;
    println!("log P via alpha: {:.12}", lat.log_likelihood());
    println!("log P via beta:  {:.12}", lat.log_likelihood_backward());
    println!("diagonal cuts:   {:?}", lat.diagonal_cuts().iter().map(|c| format!("{c:.6}")).collect::<Vec<_>>());

    let paths = enumerate_paths(frames, labels.len())?;
    println!("{} alignments; brute-force nll {:.12}", paths.len(), brute_force_nll(&grid, &labels)?);
    println!("lattice nll                 {:.12}", transducer_nll(&grid, &labels)?);

    let (loss, grad) = transducer_grad(&grid, &labels)?;
    let blank_mass: f64 = grad.chunks(symbols).map(|r| r[blank]).sum();
    println!("loss {loss:.6}; d loss / d log p(blank) sums to {blank_mass:.6} (minus the expected blank count)");
    Ok(())
}
