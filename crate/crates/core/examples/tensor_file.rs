//! Writes and reads a `CCT1` tensor file and shows its header bytes.

use conceptor_cam::io::{decode_tensor, encode_tensor, Tensor};

fn main() -> conceptor_cam::Result<()> {
    let t = Tensor::new(vec![2, 3], vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5])?;
    let bytes = encode_tensor(&t);
    println!("{} bytes, header {:02x?}", bytes.len(), &bytes[..14]);
    let back = decode_tensor(&bytes)?;
    println!("dims {:?} data {:?}", back.dims(), back.data());

    match decode_tensor(&bytes[..bytes.len() - 2]) {
        Err(e) => println!("truncated file: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
