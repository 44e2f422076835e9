/// SMILES for common solvent names, for datasets that label tasks by name
/// rather than structure. Lookup is case-insensitive.
pub fn solvent_smiles(name: &str) -> Option<&'static str> {
    let normalized = name.trim().to_lowercase();
    let smiles = match normalized.as_str() {
        "water" => "O",
        "methanol" => "CO",
        "ethanol" => "CCO",
        "n-propanol" | "1-propanol" | "propan-1-ol" => "CCCO",
        "isopropanol" | "2-propanol" | "propan-2-ol" => "CC(O)C",
        "n-butanol" | "1-butanol" | "butan-1-ol" => "CCCCO",
        "acetone" => "CC(=O)C",
        "2-butanone" | "mek" | "methyl ethyl ketone" => "CCC(=O)C",
        "benzene" => "c1ccccc1",
        "toluene" => "Cc1ccccc1",
        "xylene" | "p-xylene" => "Cc1ccc(C)cc1",
        "ethyl acetate" => "CCOC(=O)C",
        "methyl acetate" => "COC(=O)C",
        "acetonitrile" => "CC#N",
        "dmso" | "dimethyl sulfoxide" => "CS(=O)C",
        "dmf" | "n,n-dimethylformamide" | "dimethylformamide" => "CN(C)C=O",
        "thf" | "tetrahydrofuran" => "C1CCOC1",
        "1,4-dioxane" | "dioxane" => "C1COCCO1",
        "chloroform" => "C(Cl)(Cl)Cl",
        "dichloromethane" | "dcm" => "C(Cl)Cl",
        "carbon tetrachloride" => "C(Cl)(Cl)(Cl)Cl",
        "diethyl ether" | "ether" => "CCOCC",
        "hexane" | "n-hexane" => "CCCCCC",
        "heptane" | "n-heptane" => "CCCCCCC",
        "cyclohexane" => "C1CCCCC1",
        "pentane" | "n-pentane" => "CCCCC",
        "acetic acid" => "CC(=O)O",
        "formic acid" => "C(=O)O",
        "ethylene glycol" => "OCCO",
        "glycerol" => "OCC(O)CO",
        "pyridine" => "c1ccncc1",
        "aniline" => "Nc1ccccc1",
        "nitrobenzene" => "[O-][N+](=O)c1ccccc1",
        "anisole" => "COc1ccccc1",
        "chlorobenzene" => "Clc1ccccc1",
        _ => return None,
    };
    Some(smiles)
}
