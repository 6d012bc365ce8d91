pub mod shap_oracle;
