//! ITU-T CRC-16 frame check sequence.
//!
//! Generator x^16 + x^12 + x^5 + 1, register initialised to zero, bits taken
//! least-significant first, no final XOR. In reflected form the polynomial is
//! 0x8408.

const POLY_REFLECTED: u16 = 0x8408;

const TABLE: [u16; 256] = build_table();

const fn build_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u16;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ POLY_REFLECTED
            } else {
                crc >> 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

pub fn crc16_itu(data: &[u8]) -> u16 {
    data.iter().fold(0u16, |crc, &b| {
        (crc >> 8) ^ TABLE[((crc ^ b as u16) & 0xFF) as usize]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Bit-serial shift register, one input bit per step, LSB first.
    fn shift_register_oracle(data: &[u8]) -> u16 {
        let mut reg: u16 = 0;
        for &byte in data {
            for i in 0..8 {
                let input = (byte >> i) & 1;
                let feedback = (reg as u8 & 1) ^ input;
                reg >>= 1;
                if feedback == 1 {
                    reg ^= POLY_REFLECTED;
                }
            }
        }
        reg
    }

    #[test]
    fn known_vectors() {
        assert_eq!(crc16_itu(&[]), 0x0000);
        assert_eq!(crc16_itu(b"123456789"), 0x2189);
        assert_eq!(shift_register_oracle(b"123456789"), 0x2189);
    }

    proptest! {
        #[test]
        fn table_matches_oracle(data in prop::collection::vec(any::<u8>(), 0..200)) {
            prop_assert_eq!(crc16_itu(&data), shift_register_oracle(&data));
        }

        #[test]
        fn residue_is_zero(data in prop::collection::vec(any::<u8>(), 0..200)) {
            let fcs = crc16_itu(&data);
            let mut framed = data.clone();
            framed.extend_from_slice(&fcs.to_le_bytes());
            prop_assert_eq!(crc16_itu(&framed), 0);
        }
    }
}
