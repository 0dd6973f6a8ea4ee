//! First-fit-decreasing against the exact branch-and-bound packer.
//!
//! cargo run --example bin_packing

use autoscale_sim::planning::{pack_exact, pack_ffd, RequestSet};

fn show(sizes: &[u32], cap: u32) {
    let set = RequestSet::from_sizes(sizes);
    let ffd = pack_ffd(&set, cap).expect("items fit");
    let exact = pack_exact(&set, cap).expect("small instance");
    println!("{sizes:?} into {cap}: ffd {} bins {:?}, exact {} bins {:?}",
        ffd.required_nodes, ffd.bin_loads(), exact.required_nodes, exact.bin_loads());
}

fn main() {
    show(&[3, 3, 2, 2, 2], 5);
    // FFD's classic miss: it needs a third bin that the optimum avoids
    show(&[4, 4, 3, 3, 3, 3], 10);
    show(&[250, 250, 250, 250, 250, 250, 250, 250, 190], 940);
}
