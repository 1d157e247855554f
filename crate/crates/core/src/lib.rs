pub mod card_numbering;
pub mod clock;
pub mod crypto;
pub mod entropy;
pub mod fraud;
pub mod gateway;
pub mod protocol;
pub mod sim;
pub mod token;
